// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! The JSON-lines event log shared by every backend.
//!
//! Row kinds, distinguished by `"type"`:
//!
//! * `pilot` - first row; pilot shape and backend.
//! * `partition` - one per started partition.
//! * `task` - one per task state transition.
//! * `pilot_end` - last row; pilot teardown time.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resource::{NodeSlots, NodeSpec, NodeState, Placement, ResourceError, TaskId};
use crate::time::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Queued,
    Scheduled,
    Launching,
    Running,
    Done,
    Failed,
    Lost,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Done | TaskState::Failed | TaskState::Lost)
    }

    /// Whether `self -> next` is a legal lifecycle step.
    pub fn can_move_to(self, next: TaskState) -> bool {
        use TaskState::*;
        match (self, next) {
            (s, _) if s.is_terminal() => false,
            (_, Failed | Lost) => true,
            (Queued, Scheduled) | (Scheduled, Launching) | (Launching, Running) | (Running, Done) => true,
            // Requeue after a partition died before launch.
            (Scheduled, Queued) => true,
            _ => false,
        }
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("state serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRow {
    pub name: String,
    pub nodes: usize,
    pub cores_per_node: u32,
    pub gpus_per_node: u32,
    /// Nodes held by the runtime itself (overlay masters); not task capacity.
    #[serde(default)]
    pub reserved_nodes: usize,
    pub startup_latency_us: Micros,
    pub walltime_us: Micros,
    pub backend: String,
    pub flavor: String,
}

impl PilotRow {
    pub fn core_capacity(&self) -> u64 {
        (self.nodes - self.reserved_nodes) as u64 * self.cores_per_node as u64
    }

    pub fn gpu_capacity(&self) -> u64 {
        (self.nodes - self.reserved_nodes) as u64 * self.gpus_per_node as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub partition: usize,
    pub start_us: Micros,
    pub ready_us: Micros,
    pub first_node: usize,
    pub node_count: usize,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub time_us: Micros,
    pub task_id: TaskId,
    pub state: TaskState,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Vec<NodeSlots>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<usize>,
    /// End of execution when it precedes the row time (completion reported
    /// after a message hop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_end_us: Option<Micros>,
}

impl TaskRow {
    pub fn new(time_us: Micros, task_id: TaskId, state: TaskState) -> Self {
        TaskRow { time_us, task_id, state, name: String::new(), placement: None, partition: None, exec_end_us: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRow {
    Pilot(PilotRow),
    Partition(PartitionRow),
    Task(TaskRow),
    PilotEnd { time_us: Micros },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: {task}: illegal transition {from} -> {to}")]
    Transition { row: usize, task: TaskId, from: TaskState, to: TaskState },
    #[error("row {row}: {task}: first state must be queued, got {state}")]
    FirstState { row: usize, task: TaskId, state: TaskState },
    #[error("row {row}: time goes backwards for {task}")]
    NonMonotone { row: usize, task: TaskId },
    #[error("log has no pilot row")]
    MissingPilot,
    #[error("oversubscription at t={time_us}us: {source}")]
    Oversubscribed { time_us: Micros, source: ResourceError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-task lifecycle summary rebuilt from task rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub name: String,
    pub queued: Option<Micros>,
    pub scheduled: Option<Micros>,
    pub launch_start: Option<Micros>,
    pub exec_start: Option<Micros>,
    pub exec_end: Option<Micros>,
    /// Time of the terminal row.
    pub done: Option<Micros>,
    pub state: Option<TaskState>,
    pub placement: Option<Vec<NodeSlots>>,
    /// Time the placement was assigned.
    pub placed_at: Option<Micros>,
    pub partition: Option<usize>,
    pub states: Vec<TaskState>,
}

impl TaskRecord {
    pub fn is_terminal(&self) -> bool {
        self.state.is_some_and(TaskState::is_terminal)
    }

    pub fn cores_held(&self) -> u64 {
        self.placement.iter().flatten().map(|s| s.cores.len() as u64).sum()
    }

    pub fn gpus_held(&self) -> u64 {
        self.placement.iter().flatten().map(|s| s.gpus.len() as u64).sum()
    }

    /// Execution interval, if the task ever ran.
    pub fn exec_interval(&self) -> Option<(Micros, Micros)> {
        Some((self.exec_start?, self.exec_end?))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub rows: Vec<LogRow>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn task(&mut self, row: TaskRow) {
        self.rows.push(LogRow::Task(row));
    }

    pub fn pilot(&self) -> Option<&PilotRow> {
        self.rows.iter().find_map(|r| match r {
            LogRow::Pilot(p) => Some(p),
            _ => None,
        })
    }

    pub fn partitions(&self) -> impl Iterator<Item = &PartitionRow> {
        self.rows.iter().filter_map(|r| match r {
            LogRow::Partition(p) => Some(p),
            _ => None,
        })
    }

    pub fn task_rows(&self) -> impl Iterator<Item = &TaskRow> {
        self.rows.iter().filter_map(|r| match r {
            LogRow::Task(t) => Some(t),
            _ => None,
        })
    }

    pub fn end_time(&self) -> Option<Micros> {
        self.rows.iter().rev().find_map(|r| match r {
            LogRow::PilotEnd { time_us } => Some(*time_us),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Parses a JSON-lines log. Row numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = serde_json::from_str(line)
                .map_err(|e| LogError::Parse { row: i + 1, message: e.to_string() })?;
            rows.push(row);
        }
        Ok(EventLog { rows })
    }

    /// Checks per-task state transitions and time monotonicity.
    pub fn validate(&self) -> Result<(), LogError> {
        let mut last: BTreeMap<TaskId, (TaskState, Micros)> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            let LogRow::Task(t) = row else { continue };
            let row_no = i + 1;
            match last.get(&t.task_id) {
                None if t.state != TaskState::Queued => {
                    return Err(LogError::FirstState { row: row_no, task: t.task_id, state: t.state });
                }
                None => {}
                Some(&(prev, at)) => {
                    if !prev.can_move_to(t.state) {
                        return Err(LogError::Transition { row: row_no, task: t.task_id, from: prev, to: t.state });
                    }
                    if t.time_us < at {
                        return Err(LogError::NonMonotone { row: row_no, task: t.task_id });
                    }
                }
            }
            last.insert(t.task_id, (t.state, t.time_us));
        }
        Ok(())
    }

    /// Rebuilds per-task records, keyed by task id.
    pub fn records(&self) -> BTreeMap<TaskId, TaskRecord> {
        let mut out: BTreeMap<TaskId, TaskRecord> = BTreeMap::new();
        let mut end_hint: BTreeMap<TaskId, Micros> = BTreeMap::new();
        for t in self.task_rows() {
            let r = out.entry(t.task_id).or_insert_with(|| TaskRecord { task_id: t.task_id, ..Default::default() });
            if !t.name.is_empty() {
                r.name.clone_from(&t.name);
            }
            if let Some(p) = &t.placement {
                r.placement = Some(p.clone());
                r.placed_at = Some(t.time_us);
            }
            if t.partition.is_some() {
                r.partition = t.partition;
            }
            r.states.push(t.state);
            r.state = Some(t.state);
            match t.state {
                TaskState::Queued => {
                    r.queued.get_or_insert(t.time_us);
                    // A requeued task gives its placement back.
                    r.placement = None;
                    r.placed_at = None;
                }
                TaskState::Scheduled => r.scheduled = Some(t.time_us),
                TaskState::Launching => r.launch_start = Some(t.time_us),
                TaskState::Running => r.exec_start = Some(t.time_us),
                TaskState::Done | TaskState::Failed | TaskState::Lost => {
                    r.done = Some(t.time_us);
                    end_hint.insert(t.task_id, t.exec_end_us.unwrap_or(t.time_us));
                }
            }
        }
        for r in out.values_mut() {
            if r.exec_start.is_some() {
                r.exec_end = end_hint.get(&r.task_id).copied();
            }
        }
        out
    }

    /// Replays every placement through fresh node states and fails on the
    /// first double-booked slot. Releases at an instant are applied before
    /// acquisitions at the same instant.
    pub fn check_no_oversubscription(&self) -> Result<(), LogError> {
        let pilot = self.pilot().ok_or(LogError::MissingPilot)?;
        let spec = NodeSpec::new(0, pilot.cores_per_node, pilot.gpus_per_node);
        let mut nodes: Vec<NodeState> =
            (0..pilot.nodes).map(|i| NodeState::new(NodeSpec { node_id: i, ..spec })).collect();
        // (time, is_acquire, task) so releases sort first.
        let mut events: Vec<(Micros, bool, TaskId, Placement)> = Vec::new();
        for r in self.records().into_values() {
            let (Some(slots), Some(from)) = (r.placement, r.placed_at) else { continue };
            let placement = Placement { task_id: r.task_id, slots };
            let until = r.exec_end.or(r.done);
            events.push((from, true, r.task_id, placement.clone()));
            if let Some(until) = until {
                events.push((until, false, r.task_id, placement));
            }
        }
        events.sort_by_key(|e| (e.0, e.1, e.2));
        for (t, acquire, _, p) in events {
            let res = if acquire {
                crate::resource::occupy_all(&mut nodes, &p)
            } else {
                crate::resource::release_all(&mut nodes, &p)
            };
            res.map_err(|source| LogError::Oversubscribed { time_us: t, source })?;
        }
        Ok(())
    }

    /// Ordered state list per task name (or id when unnamed).
    pub fn state_sequences(&self) -> BTreeMap<String, Vec<TaskState>> {
        self.records()
            .into_values()
            .map(|r| {
                let key = if r.name.is_empty() { r.task_id.to_string() } else { r.name.clone() };
                (key, r.states)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pilot_row() -> LogRow {
        LogRow::Pilot(PilotRow {
            name: "t".into(),
            nodes: 1,
            cores_per_node: 2,
            gpus_per_node: 0,
            reserved_nodes: 0,
            startup_latency_us: 0,
            walltime_us: 100,
            backend: "direct".into(),
            flavor: "sim".into(),
        })
    }

    fn row(t: Micros, id: u64, s: TaskState, cores: Option<Vec<u32>>) -> LogRow {
        let mut r = TaskRow::new(t, TaskId(id), s);
        r.placement = cores.map(|c| vec![NodeSlots { node_id: 0, cores: c, gpus: vec![] }]);
        LogRow::Task(r)
    }

    fn lifecycle(id: u64, start: Micros, end: Micros, cores: Vec<u32>) -> Vec<LogRow> {
        vec![
            row(0, id, TaskState::Queued, None),
            row(start, id, TaskState::Scheduled, Some(cores)),
            row(start, id, TaskState::Launching, None),
            row(start, id, TaskState::Running, None),
            row(end, id, TaskState::Done, None),
        ]
    }

    #[test]
    fn round_trip_jsonl() {
        let mut log = EventLog::new();
        log.push(pilot_row());
        log.rows.extend(lifecycle(1, 0, 10, vec![0]));
        log.push(LogRow::PilotEnd { time_us: 20 });
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"type\":\"pilot\""));
        assert_eq!(EventLog::parse(&text).unwrap(), log);
    }

    #[test]
    fn parse_error_names_row() {
        let err = EventLog::parse("{\"type\":\"pilot_end\",\"time_us\":1}\nnot json\n").unwrap_err();
        assert!(matches!(err, LogError::Parse { row: 2, .. }));
    }

    #[test]
    fn transitions_checked() {
        let mut log = EventLog::new();
        log.push(row(0, 1, TaskState::Queued, None));
        log.push(row(1, 1, TaskState::Running, None));
        assert!(matches!(log.validate(), Err(LogError::Transition { .. })));
        let mut log = EventLog::new();
        log.rows.extend(lifecycle(1, 5, 10, vec![0]));
        log.validate().unwrap();
        log.push(row(11, 1, TaskState::Lost, None));
        assert!(log.validate().is_err());
    }

    #[test]
    fn records_collect_timestamps() {
        let mut log = EventLog::new();
        log.rows.extend(lifecycle(1, 5, 10, vec![0, 1]));
        let r = &log.records()[&TaskId(1)];
        assert_eq!((r.queued, r.exec_start, r.exec_end), (Some(0), Some(5), Some(10)));
        assert_eq!(r.cores_held(), 2);
        assert_eq!(r.states.len(), 5);
    }

    #[test]
    fn replay_allows_back_to_back_reuse() {
        let mut log = EventLog::new();
        log.push(pilot_row());
        log.rows.extend(lifecycle(1, 0, 10, vec![0]));
        log.rows.extend(lifecycle(2, 10, 20, vec![0]));
        log.check_no_oversubscription().unwrap();
        log.rows.extend(lifecycle(3, 15, 18, vec![0]));
        assert!(matches!(log.check_no_oversubscription(), Err(LogError::Oversubscribed { time_us: 15, .. })));
    }

    #[test]
    fn requeue_is_legal() {
        assert!(TaskState::Scheduled.can_move_to(TaskState::Queued));
        assert!(!TaskState::Running.can_move_to(TaskState::Queued));
        assert!(TaskState::Queued.can_move_to(TaskState::Failed));
    }
}
