// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Slot scheduling.
//!
//! The continuous algorithm walks the queue in priority order (largest task
//! first when `prioritize_large` is set, arrival order otherwise) and places
//! each task first-fit by ascending node id. A GPU task holds one core per
//! GPU. MPI ranks are packed densely: a node is filled before spilling to the
//! next. Tasks that do not fit stay queued; tasks that can never fit in the
//! pilot are rejected.
//!
//! The noop algorithm forwards tasks untouched and never looks at nodes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resource::{occupy_all, NodeSlots, NodeSpec, NodeState, Placement, TaskId};

/// What a task executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Sleep (or spin) for the given time.
    Sleep { seconds: f64 },
    /// Run a command. The simulator charges `expected_seconds`.
    Command { argv: Vec<String>, expected_seconds: f64 },
}

impl Payload {
    pub fn sleep(seconds: f64) -> Self {
        Payload::Sleep { seconds }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            Payload::Sleep { seconds } => *seconds,
            Payload::Command { expected_seconds, .. } => *expected_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRef {
    pub pipeline: String,
    pub stage: usize,
    pub iteration: usize,
}

/// Resource requirements and payload of one task.
///
/// `gpus` is per rank; for the usual single-rank task it is the task's GPU
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub task_id: TaskId,
    #[serde(default)]
    pub name: String,
    pub cpu_cores_per_rank: u32,
    pub ranks: u32,
    pub gpus: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_ref: Option<StageRef>,
}

impl TaskDescription {
    pub fn cpu(task_id: u64, cores: u32) -> Self {
        TaskDescription {
            task_id: TaskId(task_id),
            name: String::new(),
            cpu_cores_per_rank: cores,
            ranks: 1,
            gpus: 0,
            tag: None,
            payload: Payload::sleep(0.0),
            stage_ref: None,
        }
    }

    pub fn gpu(task_id: u64, gpus: u32, cores: u32) -> Self {
        TaskDescription { gpus, ..TaskDescription::cpu(task_id, cores) }
    }

    pub fn with_ranks(mut self, ranks: u32) -> Self {
        self.ranks = ranks;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.payload = Payload::sleep(seconds);
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.ranks == 0 {
            return Err("ranks must be at least 1".into());
        }
        if self.cpu_cores_per_rank == 0 && self.gpus == 0 {
            return Err("task requests neither cores nor GPUs".into());
        }
        let d = self.payload.duration_s();
        if !(d.is_finite() && d >= 0.0) {
            return Err(format!("payload duration must be non-negative, got {d}"));
        }
        Ok(())
    }

    /// Cores held per rank: at least one per GPU.
    pub fn cores_per_rank(&self) -> u32 {
        self.cpu_cores_per_rank.max(self.gpus)
    }

    pub fn total_cores(&self) -> u64 {
        self.ranks as u64 * self.cores_per_rank() as u64
    }

    pub fn total_gpus(&self) -> u64 {
        self.ranks as u64 * self.gpus as u64
    }

    /// Size used for large-first ordering: cores plus GPUs weighted by the
    /// node's core-per-GPU ratio.
    pub fn priority_hint(&self, weight: GpuWeight) -> f64 {
        weight.scaled_size(self) as f64 / weight.den as f64
    }

    fn shape(&self) -> ShapeKey {
        ShapeKey {
            cores: self.cpu_cores_per_rank,
            ranks: self.ranks,
            gpus: self.gpus,
            tag: self.tag.clone(),
        }
    }
}

/// Core-equivalent cost of one GPU, kept as a ratio so ordering is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpuWeight {
    pub num: u64,
    pub den: u64,
}

impl GpuWeight {
    pub fn for_node(node: &NodeSpec) -> Self {
        if node.gpus == 0 {
            GpuWeight { num: 0, den: 1 }
        } else {
            GpuWeight { num: node.usable_cpu_cores as u64, den: node.gpus as u64 }
        }
    }

    /// `den` times the priority hint.
    fn scaled_size(&self, task: &TaskDescription) -> u64 {
        let cores = task.ranks as u64 * task.cpu_cores_per_rank as u64;
        cores * self.den + self.num * task.total_gpus()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Continuous,
    Noop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Colocation {
    SameNode,
    DifferentNode,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LowestNodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub algorithm: Algorithm,
    pub prioritize_large: bool,
    pub tie_break: TieBreak,
    /// Policy per colocation tag; unlisted tags impose nothing.
    pub colocation: BTreeMap<String, Colocation>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            algorithm: Algorithm::Continuous,
            prioritize_large: true,
            tie_break: TieBreak::LowestNodeId,
            colocation: BTreeMap::new(),
        }
    }
}

impl SchedulerConfig {
    pub fn arrival_order() -> Self {
        SchedulerConfig { prioritize_large: false, ..Default::default() }
    }

    pub fn with_colocation(mut self, tag: impl Into<String>, policy: Colocation) -> Self {
        self.colocation.insert(tag.into(), policy);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("{task}: invalid description: {reason}")]
    InvalidTask { task: TaskId, reason: String },
    #[error("{task}: can never be placed in this pilot: {reason}")]
    Unschedulable { task: TaskId, reason: String },
    #[error("tasks passed to place_colocated must share one tag")]
    MixedTags,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchedulerStats {
    /// Node states inspected by the continuous algorithm.
    pub node_reads: u64,
    pub passes: u64,
    pub noop_forwarded: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ShapeKey {
    cores: u32,
    ranks: u32,
    gpus: u32,
    tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    size: Reverse<u64>,
    seq: u64,
}

/// Pending tasks in scheduling order.
#[derive(Debug, Clone)]
pub struct TaskQueue {
    prioritize_large: bool,
    weight: GpuWeight,
    entries: BTreeMap<QueueKey, TaskDescription>,
    shapes: HashMap<ShapeKey, usize>,
    seq: u64,
}

impl TaskQueue {
    pub fn new(prioritize_large: bool, weight: GpuWeight) -> Self {
        TaskQueue {
            prioritize_large,
            weight,
            entries: BTreeMap::new(),
            shapes: HashMap::new(),
            seq: 0,
        }
    }

    pub fn push(&mut self, task: TaskDescription) {
        let size = if self.prioritize_large { self.weight.scaled_size(&task) } else { 0 };
        let key = QueueKey { size: Reverse(size), seq: self.seq };
        self.seq += 1;
        *self.shapes.entry(task.shape()).or_default() += 1;
        self.entries.insert(key, task);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tasks in scheduling order.
    pub fn iter(&self) -> impl Iterator<Item = &TaskDescription> {
        self.entries.values()
    }

    pub fn drain(&mut self) -> Vec<TaskDescription> {
        self.shapes.clear();
        std::mem::take(&mut self.entries).into_values().collect()
    }

    fn remove(&mut self, key: &QueueKey) -> TaskDescription {
        let task = self.entries.remove(key).expect("queued key");
        let shape = task.shape();
        let count = self.shapes.get_mut(&shape).expect("shape count");
        *count -= 1;
        if *count == 0 {
            self.shapes.remove(&shape);
        }
        task
    }
}

/// Tasks placed and rejected by one pass over a [`TaskQueue`].
#[derive(Debug, Default)]
pub struct Pass {
    /// Placed tasks with the index of the node group they landed in.
    pub placed: Vec<(TaskDescription, Placement, usize)>,
    pub rejected: Vec<(TaskDescription, ScheduleError)>,
}

#[derive(Debug, Default)]
pub struct ScheduleOutcome {
    pub placements: Vec<(TaskId, Placement)>,
    pub remaining: Vec<TaskDescription>,
    pub rejected: Vec<(TaskDescription, ScheduleError)>,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: SchedulerConfig,
    /// Active placements per tag and node.
    tag_nodes: HashMap<String, BTreeMap<usize, u32>>,
    holdings: HashMap<TaskId, (String, Vec<usize>)>,
    stats: SchedulerStats,
}

impl Scheduler {
    pub fn new(cfg: SchedulerConfig) -> Self {
        Scheduler {
            cfg,
            tag_nodes: HashMap::new(),
            holdings: HashMap::new(),
            stats: SchedulerStats::default(),
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &SchedulerStats {
        &self.stats
    }

    pub fn new_queue(&self, node: &NodeSpec) -> TaskQueue {
        TaskQueue::new(self.cfg.prioritize_large, GpuWeight::for_node(node))
    }

    /// One continuous pass over `queue` with all nodes forming one group.
    ///
    /// Placed slots are occupied in `nodes`.
    pub fn schedule(
        &mut self,
        queue: Vec<TaskDescription>,
        nodes: &mut [NodeState],
    ) -> ScheduleOutcome {
        let Some(first) = nodes.first() else {
            let rejected = queue
                .into_iter()
                .map(|t| {
                    let err = ScheduleError::Unschedulable {
                        task: t.task_id,
                        reason: "pilot has no nodes".into(),
                    };
                    (t, err)
                })
                .collect();
            return ScheduleOutcome { rejected, ..Default::default() };
        };
        let mut q = self.new_queue(first.spec());
        for t in queue {
            q.push(t);
        }
        // one range covering every node
        #[allow(clippy::single_range_in_vec_init)]
        let all = [0..nodes.len()];
        let pass = self.schedule_queue(&mut q, nodes, &all);
        ScheduleOutcome {
            placements: pass.placed.into_iter().map(|(t, p, _)| (t.task_id, p)).collect(),
            remaining: q.drain(),
            rejected: pass.rejected,
        }
    }

    /// Places tasks that share one colocation tag.
    pub fn place_colocated(
        &mut self,
        tasks: Vec<TaskDescription>,
        nodes: &mut [NodeState],
    ) -> Result<ScheduleOutcome, ScheduleError> {
        let tag = tasks.first().and_then(|t| t.tag.clone());
        if tag.is_none() || tasks.iter().any(|t| t.tag != tag) {
            return Err(ScheduleError::MixedTags);
        }
        Ok(self.schedule(tasks, nodes))
    }

    /// Noop scheduling: same tasks, same order, no slot accounting.
    pub fn schedule_noop(&mut self, queue: Vec<TaskDescription>) -> Vec<TaskDescription> {
        self.stats.noop_forwarded += queue.len() as u64;
        queue
    }

    /// One continuous pass. A task must fit entirely inside one of `groups`
    /// (contiguous node ranges, tried in order).
    pub fn schedule_queue(
        &mut self,
        queue: &mut TaskQueue,
        nodes: &mut [NodeState],
        groups: &[Range<usize>],
    ) -> Pass {
        self.stats.passes += 1;
        let mut pass = Pass::default();
        let mut live = queue.shapes.clone();
        let mut failed: HashSet<ShapeKey> = HashSet::new();
        let mut placed_keys = Vec::new();
        let mut rejected_keys = Vec::new();

        for (key, task) in &queue.entries {
            if failed.len() == live.len() {
                break;
            }
            let shape = task.shape();
            if failed.contains(&shape) {
                continue;
            }
            if let Err(err) = self.check_feasible(task, nodes, groups) {
                rejected_keys.push((*key, err));
                decrement(&mut live, &shape);
                continue;
            }
            match self.first_fit(task, nodes, groups) {
                Some((placement, group)) => {
                    occupy_all(nodes, &placement)
                        .expect("scheduler produced a placement over busy slots");
                    self.note_placed(task, &placement);
                    placed_keys.push((*key, placement, group));
                    decrement(&mut live, &shape);
                }
                None => {
                    failed.insert(shape);
                }
            }
        }
        for (key, placement, group) in placed_keys {
            pass.placed.push((queue.remove(&key), placement, group));
        }
        for (key, err) in rejected_keys {
            pass.rejected.push((queue.remove(&key), err));
        }
        pass
    }

    /// Whether `task` could ever be placed in one of `groups` of an idle pilot.
    pub fn check_feasible(
        &self,
        task: &TaskDescription,
        nodes: &[NodeState],
        groups: &[Range<usize>],
    ) -> Result<(), ScheduleError> {
        task.validate()
            .map_err(|reason| ScheduleError::InvalidTask { task: task.task_id, reason })?;
        let unschedulable = |reason: String| ScheduleError::Unschedulable { task: task.task_id, reason };
        let Some(first) = nodes.first() else {
            return Err(unschedulable("pilot has no nodes".into()));
        };
        let shape = *first.spec();
        let per_node = ranks_per_node(task, shape.usable_cpu_cores, shape.gpus);
        if per_node == 0 {
            return Err(unschedulable(format!(
                "one rank needs {} cores and {} GPUs; nodes have {} and {}",
                task.cores_per_rank(),
                task.gpus,
                shape.usable_cpu_cores,
                shape.gpus
            )));
        }
        let single_node = task.ranks == 1 || self.policy(task) == Colocation::SameNode;
        let largest = groups.iter().map(|g| g.len()).max().unwrap_or(0) as u64;
        let capacity = if single_node { per_node.min(1) as u64 } else { per_node as u64 * largest };
        let needed = if single_node { 1 } else { task.ranks as u64 };
        if single_node && task.ranks > per_node {
            return Err(unschedulable(format!(
                "{} ranks must share one node that holds at most {per_node}",
                task.ranks
            )));
        }
        if largest == 0 || capacity < needed {
            return Err(unschedulable(format!(
                "{} ranks exceed the capacity of the largest node group ({} nodes x {per_node} ranks)",
                task.ranks, largest
            )));
        }
        Ok(())
    }

    /// First-fit placement without touching node state.
    pub fn first_fit(
        &mut self,
        task: &TaskDescription,
        nodes: &[NodeState],
        groups: &[Range<usize>],
    ) -> Option<(Placement, usize)> {
        let policy = self.policy(task);
        let tag_nodes = task.tag.as_ref().and_then(|t| self.tag_nodes.get(t));
        let allowed = |n: usize| -> bool {
            match (policy, tag_nodes) {
                (Colocation::SameNode, Some(set)) if !set.is_empty() => set.contains_key(&n),
                (Colocation::DifferentNode, Some(set)) => !set.contains_key(&n),
                _ => true,
            }
        };
        let single_node = task.ranks == 1 || policy == Colocation::SameNode;
        for (gi, group) in groups.iter().enumerate() {
            let (plan, reads) = plan_dense(task, nodes, group.clone(), &allowed, single_node);
            self.stats.node_reads += reads;
            if let Some(plan) = plan {
                return Some((build_placement(task, nodes, &plan), gi));
            }
        }
        None
    }

    /// Forgets a finished task's colocation bookkeeping.
    pub fn task_finished(&mut self, task: TaskId) {
        if let Some((tag, nodes)) = self.holdings.remove(&task) {
            if let Some(set) = self.tag_nodes.get_mut(&tag) {
                for n in nodes {
                    if let Some(c) = set.get_mut(&n) {
                        *c -= 1;
                        if *c == 0 {
                            set.remove(&n);
                        }
                    }
                }
            }
        }
    }

    pub fn note_placed(&mut self, task: &TaskDescription, placement: &Placement) {
        if let Some(tag) = &task.tag {
            let nodes: Vec<usize> = placement.node_ids().collect();
            let set = self.tag_nodes.entry(tag.clone()).or_default();
            for &n in &nodes {
                *set.entry(n).or_default() += 1;
            }
            self.holdings.insert(task.task_id, (tag.clone(), nodes));
        }
    }

    fn policy(&self, task: &TaskDescription) -> Colocation {
        task.tag
            .as_ref()
            .and_then(|t| self.cfg.colocation.get(t).copied())
            .unwrap_or_default()
    }
}

fn decrement(live: &mut HashMap<ShapeKey, usize>, shape: &ShapeKey) {
    if let Some(c) = live.get_mut(shape) {
        *c -= 1;
        if *c == 0 {
            live.remove(shape);
        }
    }
}

/// Ranks of `task` that fit on a node with the given free slots.
fn ranks_per_node(task: &TaskDescription, free_cores: u32, free_gpus: u32) -> u32 {
    let by_cores = free_cores / task.cores_per_rank();
    let by_gpus = free_gpus.checked_div(task.gpus).unwrap_or(u32::MAX);
    by_cores.min(by_gpus)
}

/// (node, ranks) pairs for a dense first-fit placement, and the number of
/// nodes inspected.
fn plan_dense(
    task: &TaskDescription,
    nodes: &[NodeState],
    range: Range<usize>,
    allowed: &dyn Fn(usize) -> bool,
    single_node: bool,
) -> (Option<Vec<(usize, u32)>>, u64) {
    let mut reads = 0;
    let mut remaining = task.ranks;
    let mut plan = Vec::new();
    for n in range {
        if !allowed(n) {
            continue;
        }
        reads += 1;
        let node = &nodes[n];
        let fit = ranks_per_node(task, node.free_cores(), node.free_gpus());
        if single_node {
            if fit >= task.ranks {
                return (Some(vec![(n, task.ranks)]), reads);
            }
            continue;
        }
        let take = fit.min(remaining);
        if take > 0 {
            plan.push((n, take));
            remaining -= take;
            if remaining == 0 {
                return (Some(plan), reads);
            }
        }
    }
    (None, reads)
}

fn build_placement(task: &TaskDescription, nodes: &[NodeState], plan: &[(usize, u32)]) -> Placement {
    let slots = plan
        .iter()
        .map(|&(n, ranks)| {
            let node = &nodes[n];
            NodeSlots {
                node_id: n,
                cores: node
                    .lowest_free_cores(ranks * task.cores_per_rank())
                    .expect("planned cores are free"),
                gpus: node.lowest_free_gpus(ranks * task.gpus).expect("planned GPUs are free"),
            }
        })
        .collect();
    Placement { task_id: task.task_id, slots }
}
