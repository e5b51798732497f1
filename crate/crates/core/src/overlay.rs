// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Master/worker overlay for fine-grained work items.
//!
//! One master per `nodes_per_master` nodes, one worker on every other node.
//! Each master owns a contiguous block of the item space and feeds its
//! workers in bulk messages. A worker buffers up to `prefetch` items per slot
//! and asks for more once it is half empty.

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{Driver, Fired, SimDriver};
use crate::log::{EventLog, LogRow, PilotRow, TaskRow, TaskState};
use crate::resource::{NodeSlots, ResourceSpec, TaskId};
use crate::time::{self, Micros};
use crate::workload::{DurationModel, TaskShape, WorkloadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OverlayError {
    #[error("overlay needs at least one master and one worker node, pilot has {0}")]
    TooSmall(usize),
    #[error("invalid overlay configuration: {0}")]
    Config(String),
    #[error("all workers of master {0} are gone with items left")]
    Drained(usize),
    #[error("protocol error from worker {worker}: {kind:?} for items {items:?}")]
    Protocol { worker: usize, kind: ProtocolErrorKind, items: Vec<u64> },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolErrorKind {
    /// Never dispatched by this master.
    Unknown,
    /// In flight on a different worker.
    WrongWorker,
    /// Already completed.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MasterConfig {
    pub nodes_per_master: usize,
    pub bulk_size: usize,
    /// Items a worker may hold per slot.
    pub prefetch: u32,
    /// One-way message latency.
    pub message_latency_s: f64,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig { nodes_per_master: 100, bulk_size: 16, prefetch: 2, message_latency_s: 0.001 }
    }
}

impl MasterConfig {
    pub fn validate(&self) -> Result<(), OverlayError> {
        if self.nodes_per_master == 0 || self.bulk_size == 0 || self.prefetch == 0 {
            return Err(OverlayError::Config("nodes_per_master, bulk_size and prefetch must be >= 1".into()));
        }
        if !(self.message_latency_s.is_finite() && self.message_latency_s >= 0.0) {
            return Err(OverlayError::Config("message_latency_s must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub worker_id: usize,
    pub node_id: usize,
    pub master_id: usize,
    /// Execution slots on the node.
    pub slots: u32,
    /// Items the worker may hold.
    pub capacity: u32,
    pub in_flight: u32,
    pub completed: u64,
    pub alive: bool,
}

impl WorkerState {
    pub fn free(&self) -> u32 {
        self.capacity - self.in_flight
    }

    pub fn wants_refill(&self) -> bool {
        2 * self.in_flight < self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ItemState {
    Queued,
    InFlight(usize),
    Done,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub master_id: usize,
    pub worker_id: usize,
    pub items: Vec<u64>,
}

/// A master's view of its item block.
#[derive(Debug, Clone)]
pub struct Master {
    pub master_id: usize,
    pub node_id: usize,
    pub workers: Vec<usize>,
    pub items: Range<u64>,
    bulk_size: usize,
    queue: VecDeque<u64>,
    state: HashMap<u64, ItemState>,
    retried: HashMap<u64, u32>,
    pub dispatched: u64,
    pub completed: u64,
    pub lost: u64,
    pub failed: u64,
    pub messages: u64,
}

impl Master {
    pub fn new(master_id: usize, node_id: usize, workers: Vec<usize>, items: Range<u64>, bulk_size: usize) -> Self {
        Master {
            master_id,
            node_id,
            workers,
            queue: items.clone().collect(),
            state: items.clone().map(|i| (i, ItemState::Queued)).collect(),
            items,
            bulk_size,
            retried: HashMap::new(),
            dispatched: 0,
            completed: 0,
            lost: 0,
            failed: 0,
            messages: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }

    pub fn in_flight(&self) -> u64 {
        self.state.values().filter(|s| matches!(s, ItemState::InFlight(_))).count() as u64
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty() && self.dispatched == self.completed + self.lost
    }

    /// Sends bulk messages while some worker can take one.
    pub fn dispatch_bulk(&mut self, workers: &mut [WorkerState]) -> Result<Vec<Dispatch>, OverlayError> {
        let mut out = Vec::new();
        if self.queue.is_empty() {
            return Ok(out);
        }
        if !self.workers.iter().any(|&w| workers[w].alive) {
            return Err(OverlayError::Drained(self.master_id));
        }
        while !self.queue.is_empty() {
            let mut best: Option<usize> = None;
            for &w in &self.workers {
                let ws = &workers[w];
                // A full bulk fits, or the worker has drained to its refill mark.
                let full = self.bulk_size.min(self.queue.len());
                if !ws.alive || ws.free() == 0 || ((ws.free() as usize) < full && !ws.wants_refill()) {
                    continue;
                }
                if best.is_none_or(|b| ws.free() > workers[b].free()) {
                    best = Some(w);
                }
            }
            let Some(w) = best else { break };
            let size = self.bulk_size.min(workers[w].free() as usize).min(self.queue.len());
            let items: Vec<u64> = self.queue.drain(..size).collect();
            for &i in &items {
                self.state.insert(i, ItemState::InFlight(w));
            }
            workers[w].in_flight += size as u32;
            self.dispatched += size as u64;
            self.messages += 1;
            out.push(Dispatch { master_id: self.master_id, worker_id: w, items });
        }
        Ok(out)
    }

    /// Books completions reported by `worker`. Valid items are applied even
    /// when others in the same report are rejected.
    pub fn report_completion(&mut self, workers: &mut [WorkerState], worker: usize, items: &[u64]) -> Result<(), OverlayError> {
        let mut bad = Vec::new();
        let mut kind = ProtocolErrorKind::Unknown;
        for &i in items {
            match self.state.get(&i).copied() {
                Some(ItemState::InFlight(w)) if w == worker => {
                    self.state.insert(i, ItemState::Done);
                    workers[w].in_flight -= 1;
                    workers[w].completed += 1;
                    self.completed += 1;
                }
                Some(ItemState::InFlight(w)) => {
                    self.state.insert(i, ItemState::Lost);
                    workers[w].in_flight -= 1;
                    self.lost += 1;
                    kind = ProtocolErrorKind::WrongWorker;
                    bad.push(i);
                }
                Some(ItemState::Done) => {
                    kind = ProtocolErrorKind::Duplicate;
                    bad.push(i);
                }
                _ => {
                    kind = ProtocolErrorKind::Unknown;
                    bad.push(i);
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            log::warn!("master {}: {:?} completion from worker {worker}: {:?}", self.master_id, kind, bad);
            Err(OverlayError::Protocol { worker, kind, items: bad })
        }
    }

    /// Marks `worker` dead. Its items go back to the queue once; items that
    /// were already retried are failed. Returns (requeued, failed).
    pub fn worker_lost(&mut self, workers: &mut [WorkerState], worker: usize) -> (Vec<u64>, Vec<u64>) {
        workers[worker].alive = false;
        workers[worker].in_flight = 0;
        let mut mine: Vec<u64> = self
            .state
            .iter()
            .filter(|(_, s)| **s == ItemState::InFlight(worker))
            .map(|(i, _)| *i)
            .collect();
        mine.sort_unstable();
        let (mut requeued, mut failed) = (Vec::new(), Vec::new());
        for i in mine {
            let tries = self.retried.entry(i).or_default();
            if *tries == 0 {
                *tries += 1;
                self.state.insert(i, ItemState::Queued);
                self.queue.push_back(i);
                self.dispatched -= 1;
                requeued.push(i);
            } else {
                self.state.insert(i, ItemState::Lost);
                self.lost += 1;
                self.failed += 1;
                failed.push(i);
            }
        }
        (requeued, failed)
    }
}

/// Masters and workers laid out on a pilot.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub masters: Vec<Master>,
    pub workers: Vec<WorkerState>,
}

impl Overlay {
    pub fn conserved(&self) -> bool {
        self.masters.iter().all(|m| m.dispatched == m.completed + m.in_flight() + m.lost)
    }
}

/// Places masters on every `nodes_per_master`-th node and a worker on every
/// other node, and splits `item_count` items into one block per master.
pub fn spawn_overlay(nodes: usize, slots_per_worker: u32, item_count: u64, cfg: &MasterConfig) -> Result<Overlay, OverlayError> {
    cfg.validate()?;
    let masters = nodes.div_ceil(cfg.nodes_per_master);
    if masters == 0 || nodes <= masters {
        return Err(OverlayError::TooSmall(nodes));
    }
    if slots_per_worker == 0 {
        return Err(OverlayError::Config("workers have no execution slots".into()));
    }
    let master_nodes: Vec<usize> = (0..masters).map(|m| m * cfg.nodes_per_master).collect();
    let capacity = slots_per_worker * cfg.prefetch;
    let workers: Vec<WorkerState> = (0..nodes)
        .filter(|n| n % cfg.nodes_per_master != 0)
        .enumerate()
        .map(|(w, node_id)| WorkerState {
            worker_id: w,
            node_id,
            master_id: w % masters,
            slots: slots_per_worker,
            capacity,
            in_flight: 0,
            completed: 0,
            alive: true,
        })
        .collect();
    let masters = master_nodes
        .iter()
        .enumerate()
        .map(|(m, &node)| {
            let lo = item_count * m as u64 / masters as u64;
            let hi = item_count * (m as u64 + 1) / masters as u64;
            let mine = workers.iter().filter(|w| w.master_id == m).map(|w| w.worker_id).collect();
            Master::new(m, node, mine, lo..hi, cfg.bulk_size)
        })
        .collect();
    Ok(Overlay { masters, workers })
}

/// A full overlay run on the simulated clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRun {
    pub resource: ResourceSpec,
    pub master: MasterConfig,
    /// Executions (each credited `bundle_size` items).
    pub executions: u64,
    pub bundle_size: u32,
    pub shape: TaskShape,
    pub duration: DurationModel,
    pub startup_latency_s: f64,
    pub walltime_s: f64,
    pub seed: u64,
    /// Workers that die, with the time of death in seconds.
    #[serde(default)]
    pub worker_failures: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct OverlayOutcome {
    pub log: EventLog,
    pub completed: u64,
    pub lost: u64,
    pub failed: u64,
    pub messages: u64,
    pub end: Micros,
    pub overlay: Overlay,
    pub protocol_errors: u64,
}

#[derive(Debug, Clone)]
enum OvEv {
    Register(usize),
    Arrive(Dispatch),
    ExecEnd { worker: usize, slot: u32, item: u64 },
    DoneAt { worker: usize, item: u64, exec_end: Micros },
    Death(usize),
    Walltime,
}

struct WorkerRt {
    free_slots: Vec<u32>,
    buffer: VecDeque<u64>,
    running: HashMap<u64, u32>,
}

impl OverlayRun {
    fn slots_per_worker(&self) -> u32 {
        let node = self.resource.node_shape();
        let per_exec_cores = self.shape.cpu_cores.max(self.shape.gpus) * self.shape.ranks;
        if self.shape.gpus > 0 {
            (node.gpus / (self.shape.gpus * self.shape.ranks)).min(node.usable_cpu_cores / per_exec_cores)
        } else {
            node.usable_cpu_cores / per_exec_cores
        }
    }

    fn slot_placement(&self, node: usize, slot: u32) -> Vec<NodeSlots> {
        let c = self.shape.cpu_cores.max(self.shape.gpus) * self.shape.ranks;
        let g = self.shape.gpus * self.shape.ranks;
        vec![NodeSlots { node_id: node, cores: (slot * c..(slot + 1) * c).collect(), gpus: (slot * g..(slot + 1) * g).collect() }]
    }

    pub fn run(&self) -> Result<OverlayOutcome, OverlayError> {
        self.resource.validate().map_err(|e| OverlayError::Config(e.to_string()))?;
        let nodes = self.resource.nodes.len();
        let mut ov = spawn_overlay(nodes, self.slots_per_worker(), self.executions, &self.master)?;
        let mut sampler = self.duration.sampler(self.seed)?;
        let durations: Vec<Micros> = (0..self.executions).map(|_| time::from_secs(sampler.sample())).collect();
        let lat = time::from_secs(self.master.message_latency_s);
        let start = time::from_secs(self.startup_latency_s);
        let shape = self.resource.node_shape();

        let mut log = EventLog::new();
        log.push(LogRow::Pilot(PilotRow {
            name: self.resource.name.clone(),
            nodes,
            cores_per_node: shape.usable_cpu_cores,
            gpus_per_node: shape.gpus,
            reserved_nodes: ov.masters.len(),
            startup_latency_us: start,
            walltime_us: time::from_secs(self.walltime_s),
            backend: "overlay".into(),
            flavor: "sim".into(),
        }));
        // A retried item gets a fresh task id so each attempt has one lifecycle.
        let attempt_id = |item: u64, attempt: u32| TaskId(item + attempt as u64 * self.executions);
        let mut attempts: HashMap<u64, u32> = HashMap::new();

        let mut d: SimDriver<OvEv> = SimDriver::new();
        for w in 0..ov.workers.len() {
            d.schedule(start + lat, OvEv::Register(w));
        }
        for &(w, t) in &self.worker_failures {
            d.schedule(time::from_secs(t), OvEv::Death(w));
        }
        d.schedule(time::from_secs(self.walltime_s), OvEv::Walltime);
        let mut rt: Vec<WorkerRt> = ov
            .workers
            .iter()
            .map(|w| WorkerRt { free_slots: (0..w.slots).rev().collect(), buffer: VecDeque::new(), running: HashMap::new() })
            .collect();
        let mut registered = vec![false; ov.workers.len()];
        let mut protocol_errors = 0;
        let mut end = start;

        let send = |d: &mut SimDriver<OvEv>, log: &mut EventLog, now: Micros, msgs: Vec<Dispatch>, attempts: &HashMap<u64, u32>| {
            for m in msgs {
                for &i in &m.items {
                    let id = attempt_id(i, attempts.get(&i).copied().unwrap_or(0));
                    log.task(TaskRow::new(now, id, TaskState::Queued));
                    log.task(TaskRow::new(now, id, TaskState::Scheduled));
                }
                d.schedule(now + lat, OvEv::Arrive(m));
            }
        };

        while let Some((now, fired)) = d.next() {
            let Fired::Timer(ev) = fired else { unreachable!("overlay spawns no payloads") };
            match ev {
                OvEv::Register(w) => {
                    registered[w] = true;
                    let m = ov.workers[w].master_id;
                    let msgs = ov.masters[m].dispatch_bulk(&mut ov.workers)?;
                    send(&mut d, &mut log, now, msgs, &attempts);
                }
                OvEv::Arrive(msg) => {
                    let w = msg.worker_id;
                    if !ov.workers[w].alive {
                        continue;
                    }
                    rt[w].buffer.extend(msg.items);
                    self.start_items(&mut d, &mut log, now, w, &ov, &mut rt[w], &durations, &attempts, &attempt_id);
                }
                OvEv::ExecEnd { worker, slot, item } => {
                    if !ov.workers[worker].alive || rt[worker].running.remove(&item).is_none() {
                        continue;
                    }
                    rt[worker].free_slots.push(slot);
                    d.schedule(now + lat, OvEv::DoneAt { worker, item, exec_end: now });
                    self.start_items(&mut d, &mut log, now, worker, &ov, &mut rt[worker], &durations, &attempts, &attempt_id);
                }
                OvEv::DoneAt { worker, item, exec_end } => {
                    let m = ov.workers[worker].master_id;
                    match ov.masters[m].report_completion(&mut ov.workers, worker, &[item]) {
                        Ok(()) => {
                            let mut row = TaskRow::new(now, attempt_id(item, attempts.get(&item).copied().unwrap_or(0)), TaskState::Done);
                            row.exec_end_us = Some(exec_end);
                            log.task(row);
                            end = now;
                        }
                        Err(_) => protocol_errors += 1,
                    }
                    if ov.workers[worker].wants_refill() {
                        let msgs = ov.masters[m].dispatch_bulk(&mut ov.workers)?;
                        send(&mut d, &mut log, now, msgs, &attempts);
                    }
                }
                OvEv::Death(w) => {
                    if !ov.workers[w].alive {
                        continue;
                    }
                    let m = ov.workers[w].master_id;
                    // Running items are lost, buffered ones never started.
                    let mut running: Vec<u64> = rt[w].running.keys().copied().collect();
                    running.sort_unstable();
                    for i in running {
                        log.task(TaskRow::new(now, attempt_id(i, attempts.get(&i).copied().unwrap_or(0)), TaskState::Lost));
                    }
                    for &i in &rt[w].buffer {
                        log.task(TaskRow::new(now, attempt_id(i, attempts.get(&i).copied().unwrap_or(0)), TaskState::Lost));
                    }
                    rt[w].running.clear();
                    rt[w].buffer.clear();
                    let (requeued, failed) = ov.masters[m].worker_lost(&mut ov.workers, w);
                    log::warn!("worker {w} died: {} items requeued, {} failed", requeued.len(), failed.len());
                    for i in requeued {
                        *attempts.entry(i).or_default() += 1;
                    }
                    end = now;
                    {
                        let msgs = ov.masters[m].dispatch_bulk(&mut ov.workers)?;
                        send(&mut d, &mut log, now, msgs, &attempts)
                    }
                }
                OvEv::Walltime => {
                    log::warn!("overlay walltime reached at {now}us");
                    end = now;
                    break;
                }
            }
            if ov.masters.iter().all(Master::is_finished) && registered.iter().all(|r| *r) {
                break;
            }
        }
        // Anything still out at teardown is lost.
        let records = log.records();
        let mut open: Vec<TaskId> = records.values().filter(|r| !r.is_terminal()).map(|r| r.task_id).collect();
        open.sort();
        for id in &open {
            log.task(TaskRow::new(end, *id, TaskState::Lost));
        }
        log.push(LogRow::PilotEnd { time_us: end });
        let completed = ov.masters.iter().map(|m| m.completed).sum();
        let lost = ov.masters.iter().map(|m| m.lost).sum::<u64>() + open.len() as u64;
        let failed = ov.masters.iter().map(|m| m.failed).sum();
        let messages = ov.masters.iter().map(|m| m.messages).sum();
        Ok(OverlayOutcome { log, completed, lost, failed, messages, end, overlay: ov, protocol_errors })
    }

    #[allow(clippy::too_many_arguments)]
    fn start_items(
        &self,
        d: &mut SimDriver<OvEv>,
        log: &mut EventLog,
        now: Micros,
        w: usize,
        ov: &Overlay,
        rt: &mut WorkerRt,
        durations: &[Micros],
        attempts: &HashMap<u64, u32>,
        attempt_id: &dyn Fn(u64, u32) -> TaskId,
    ) {
        while let Some(slot) = rt.free_slots.pop() {
            let Some(item) = rt.buffer.pop_front() else {
                rt.free_slots.push(slot);
                return;
            };
            let id = attempt_id(item, attempts.get(&item).copied().unwrap_or(0));
            let mut row = TaskRow::new(now, id, TaskState::Launching);
            row.placement = Some(self.slot_placement(ov.workers[w].node_id, slot));
            log.task(row);
            log.task(TaskRow::new(now, id, TaskState::Running));
            rt.running.insert(item, slot);
            d.schedule(now + durations[item as usize], OvEv::ExecEnd { worker: w, slot, item });
        }
    }
}

/// Longest-processing-time-first makespan of `durations` on `machines`.
pub fn lpt_makespan(durations: &[f64], machines: usize) -> f64 {
    let mut d = durations.to_vec();
    d.sort_by(|a, b| b.total_cmp(a));
    let mut loads = vec![0.0f64; machines];
    for x in d {
        let (i, _) = loads.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("machines >= 1");
        loads[i] += x;
    }
    loads.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resource::NodeSpec;

    fn workers(caps: &[u32]) -> Vec<WorkerState> {
        caps.iter()
            .enumerate()
            .map(|(i, &c)| WorkerState { worker_id: i, node_id: i + 1, master_id: 0, slots: c, capacity: c, in_flight: 0, completed: 0, alive: true })
            .collect()
    }

    #[test]
    fn layout_counts() {
        let cfg = MasterConfig::default();
        for (nodes, m, w) in [(128, 2, 126), (1000, 10, 990), (2, 1, 1)] {
            let ov = spawn_overlay(nodes, 4, 100, &cfg).unwrap();
            assert_eq!((ov.masters.len(), ov.workers.len()), (m, w), "{nodes} nodes");
            let master_nodes: Vec<_> = ov.masters.iter().map(|m| m.node_id).collect();
            assert!(ov.workers.iter().all(|w| !master_nodes.contains(&w.node_id)));
        }
        assert_eq!(spawn_overlay(1, 4, 10, &cfg).unwrap_err(), OverlayError::TooSmall(1));
    }

    #[test]
    fn item_blocks_partition_space() {
        let ov = spawn_overlay(300, 4, 1001, &MasterConfig::default()).unwrap();
        let mut next = 0;
        for m in &ov.masters {
            assert_eq!(m.items.start, next);
            next = m.items.end;
        }
        assert_eq!(next, 1001);
    }

    #[test]
    fn bulk_message_sizes() {
        let mut ws = workers(&[16]);
        let mut m = Master::new(0, 0, vec![0], 0..10, 4);
        let msgs = m.dispatch_bulk(&mut ws).unwrap();
        let sizes: Vec<_> = msgs.iter().map(|d| d.items.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn most_free_worker_wins() {
        let mut ws = workers(&[5, 1]);
        let mut m = Master::new(0, 0, vec![0, 1], 0..1, 4);
        let msgs = m.dispatch_bulk(&mut ws).unwrap();
        assert_eq!(msgs[0].worker_id, 0);
    }

    #[test]
    fn completion_protocol() {
        let mut ws = workers(&[4, 4]);
        let mut m = Master::new(0, 0, vec![0, 1], 0..6, 3);
        let msgs = m.dispatch_bulk(&mut ws).unwrap();
        assert_eq!(msgs.len(), 2);
        let on0 = msgs.iter().find(|d| d.worker_id == 0).unwrap().items.clone();
        m.report_completion(&mut ws, 0, &on0).unwrap();
        assert_eq!(ws[0].in_flight, 0);
        assert!(ws[0].wants_refill());
        let err = m.report_completion(&mut ws, 0, &on0[..1]).unwrap_err();
        assert!(matches!(err, OverlayError::Protocol { kind: ProtocolErrorKind::Duplicate, .. }));
        assert_eq!(m.completed, 3);
        assert!(matches!(m.report_completion(&mut ws, 0, &[99]), Err(OverlayError::Protocol { kind: ProtocolErrorKind::Unknown, .. })));
        let on1 = msgs.iter().find(|d| d.worker_id == 1).unwrap().items.clone();
        assert!(m.report_completion(&mut ws, 0, &on1[..1]).is_err());
        assert_eq!(m.lost, 1);
        assert_eq!(m.dispatched, m.completed + m.in_flight() + m.lost);
    }

    #[test]
    fn lost_worker_requeues_once() {
        let mut ws = workers(&[2, 2]);
        let mut m = Master::new(0, 0, vec![0, 1], 0..2, 2);
        m.dispatch_bulk(&mut ws).unwrap();
        let (rq, failed) = m.worker_lost(&mut ws, 0);
        assert_eq!((rq.len(), failed.len()), (2, 0));
        let msgs = m.dispatch_bulk(&mut ws).unwrap();
        assert_eq!(msgs[0].worker_id, 1);
        let (rq, failed) = m.worker_lost(&mut ws, 1);
        assert_eq!((rq.len(), failed.len()), (0, 2));
        assert!(m.is_finished());
        assert_eq!(m.dispatch_bulk(&mut ws).unwrap(), vec![]);
        let mut m2 = Master::new(0, 0, vec![0, 1], 0..1, 1);
        assert_eq!(m2.dispatch_bulk(&mut ws), Err(OverlayError::Drained(0)));
    }

    fn small_run(executions: u64, duration: DurationModel) -> OverlayRun {
        OverlayRun {
            resource: ResourceSpec::homogeneous("t", 3, NodeSpec::new(0, 4, 0)),
            master: MasterConfig { bulk_size: 2, ..Default::default() },
            executions,
            bundle_size: 1,
            shape: TaskShape { cpu_cores: 1, gpus: 0, ranks: 1 },
            duration,
            startup_latency_s: 0.0,
            walltime_s: 1e6,
            seed: 1,
            worker_failures: vec![],
        }
    }

    #[test]
    fn run_completes_everything() {
        let out = small_run(100, DurationModel::constant(1.0)).run().unwrap();
        assert_eq!(out.completed, 100);
        assert!(out.overlay.conserved());
        out.log.validate().unwrap();
        out.log.check_no_oversubscription().unwrap();
        // 100 items on 8 slots.
        assert!(out.end >= 13_000_000 && out.end < 13_100_000, "end {}", out.end);
    }

    #[test]
    fn worker_death_retries_elsewhere() {
        let mut run = small_run(40, DurationModel::constant(1.0));
        run.worker_failures = vec![(0, 2.5)];
        let out = run.run().unwrap();
        assert_eq!(out.completed, 40);
        assert!(out.lost == 0 && out.failed == 0);
        out.log.validate().unwrap();
        out.log.check_no_oversubscription().unwrap();
    }
}
