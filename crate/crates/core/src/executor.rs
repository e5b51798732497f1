// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Launch backends and the session loop.
//!
//! Three backends share one agent:
//!
//! * `direct` - the continuous scheduler places tasks anywhere in the pilot
//!   and launches them through serialized launch lanes.
//! * `partitioned` - the pilot is cut into partitions started one after the
//!   other; each task lives inside one partition. Partitions beyond the
//!   stability limits may fail at startup, fail internally or lose their
//!   connection.
//! * `bulk` - the agent forwards tasks untouched (noop scheduling) to a
//!   bulk scheduler that admits at most `scheduling_rate` tasks per second,
//!   placing each first-fit at admission.
//!
//! The same agent runs on a simulated clock or on the wall clock with real
//! processes, depending on the [`Driver`].

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{Driver, Fired, PayloadOutcome, RealDriver, RealMode, SimDriver};
use crate::log::{EventLog, LogRow, PartitionRow, PilotRow, TaskRow, TaskState};
use crate::resource::{acquire, release_all, NodeState, PilotDescription, Placement, ResourceError, TaskId};
use crate::scheduler::{Algorithm, Scheduler, SchedulerConfig, SchedulerStats, TaskDescription, TaskQueue};
use crate::time::{self, Micros};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Direct,
    Partitioned,
    Bulk,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Direct => "direct",
            BackendKind::Partitioned => "partitioned",
            BackendKind::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    #[default]
    Sim,
    Real,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Sim => "sim",
            Flavor::Real => "real",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid partition plan: {0}")]
    InvalidPlan(String),
    #[error("invalid backend configuration: {0}")]
    InvalidBackend(String),
    #[error(transparent)]
    Resource(#[from] ResourceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionPlan {
    pub partition_count: usize,
    pub nodes_per_partition: usize,
    /// Total launches a partition accepts, checked once per scheduling pass.
    pub max_tasks_per_partition: Option<u64>,
    pub per_partition_start_cost_s: f64,
    pub post_start_sleep_s: f64,
    pub per_launch_delay_s: f64,
    /// Launch lanes shared by all partitions.
    pub lanes: usize,
}

impl Default for PartitionPlan {
    fn default() -> Self {
        PartitionPlan {
            partition_count: 1,
            nodes_per_partition: 1,
            max_tasks_per_partition: None,
            per_partition_start_cost_s: 0.5,
            post_start_sleep_s: 10.0,
            per_launch_delay_s: 0.1,
            lanes: 1,
        }
    }
}

impl PartitionPlan {
    pub fn new(partition_count: usize, nodes_per_partition: usize) -> Self {
        PartitionPlan { partition_count, nodes_per_partition, ..Default::default() }
    }

    pub fn validate(&self, pilot_nodes: usize) -> Result<(), ExecError> {
        let bad = |m: String| Err(ExecError::InvalidPlan(m));
        if self.partition_count == 0 || self.nodes_per_partition == 0 {
            return bad("partition_count and nodes_per_partition must be >= 1".into());
        }
        if self.partition_count * self.nodes_per_partition > pilot_nodes {
            return bad(format!(
                "{} partitions x {} nodes exceed the pilot's {pilot_nodes} nodes",
                self.partition_count, self.nodes_per_partition
            ));
        }
        for (name, v) in [
            ("per_partition_start_cost_s", self.per_partition_start_cost_s),
            ("post_start_sleep_s", self.post_start_sleep_s),
            ("per_launch_delay_s", self.per_launch_delay_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.lanes == 0 {
            return bad("lanes must be >= 1".into());
        }
        if self.max_tasks_per_partition == Some(0) {
            return bad("max_tasks_per_partition must be >= 1".into());
        }
        Ok(())
    }

    pub fn range(&self, p: usize) -> Range<usize> {
        p * self.nodes_per_partition..(p + 1) * self.nodes_per_partition
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityLimits {
    pub stable_max_nodes: usize,
    pub stable_max_tasks: u64,
    pub stable_max_partitions: usize,
    pub startup_failure: f64,
    pub internal_failure: f64,
    pub lost_connection: f64,
    pub inject_failures: bool,
}

impl Default for StabilityLimits {
    fn default() -> Self {
        StabilityLimits {
            stable_max_nodes: 50,
            stable_max_tasks: 200,
            stable_max_partitions: 32,
            startup_failure: 0.03,
            internal_failure: 0.01,
            lost_connection: 0.01,
            inject_failures: true,
        }
    }
}

impl StabilityLimits {
    pub fn validate(&self) -> Result<(), ExecError> {
        for (name, p) in [
            ("startup_failure", self.startup_failure),
            ("internal_failure", self.internal_failure),
            ("lost_connection", self.lost_connection),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ExecError::InvalidBackend(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.internal_failure + self.lost_connection > 1.0 {
            return Err(ExecError::InvalidBackend("internal_failure + lost_connection exceeds 1".into()));
        }
        if self.stable_max_tasks == 0 {
            return Err(ExecError::InvalidBackend("stable_max_tasks must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether partitions of this plan run outside the stable range.
    pub fn unstable(&self, plan: &PartitionPlan) -> bool {
        self.inject_failures
            && (plan.nodes_per_partition >= self.stable_max_nodes
                || plan.partition_count > self.stable_max_partitions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BulkBackendConfig {
    /// Admissions per second; `inf` disables the cap.
    pub scheduling_rate: f64,
    pub startup_cost_s: f64,
}

impl Default for BulkBackendConfig {
    fn default() -> Self {
        BulkBackendConfig { scheduling_rate: 14.21, startup_cost_s: 0.0 }
    }
}

impl BulkBackendConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.scheduling_rate.is_nan() || self.scheduling_rate <= 0.0 {
            return Err(ExecError::InvalidBackend(format!(
                "scheduling_rate must be > 0, got {}",
                self.scheduling_rate
            )));
        }
        if !(self.startup_cost_s.is_finite() && self.startup_cost_s >= 0.0) {
            return Err(ExecError::InvalidBackend("startup_cost_s must be >= 0".into()));
        }
        Ok(())
    }

    /// Spacing between admissions.
    pub fn interval(&self) -> Micros {
        if self.scheduling_rate.is_infinite() {
            0
        } else {
            time::from_secs(1.0 / self.scheduling_rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub flavor: Flavor,
    /// Launch delay of the direct backend.
    pub launch_delay_s: f64,
    /// Launch lanes of the direct backend.
    pub lanes: usize,
    pub real_mode: RealMode,
    pub bulk: BulkBackendConfig,
    pub stability: StabilityLimits,
    /// Seed for failure injection.
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Direct,
            flavor: Flavor::Sim,
            launch_delay_s: 0.0,
            lanes: 1,
            real_mode: RealMode::default(),
            bulk: BulkBackendConfig::default(),
            stability: StabilityLimits::default(),
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn direct() -> Self {
        Self::default()
    }

    pub fn partitioned() -> Self {
        BackendConfig { kind: BackendKind::Partitioned, ..Default::default() }
    }

    pub fn bulk(rate: f64) -> Self {
        BackendConfig {
            kind: BackendKind::Bulk,
            bulk: BulkBackendConfig { scheduling_rate: rate, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, desc: &PilotDescription, sched: &SchedulerConfig) -> Result<(), ExecError> {
        if !(self.launch_delay_s.is_finite() && self.launch_delay_s >= 0.0) {
            return Err(ExecError::InvalidBackend("launch_delay_s must be >= 0".into()));
        }
        if self.lanes == 0 {
            return Err(ExecError::InvalidBackend("lanes must be >= 1".into()));
        }
        self.bulk.validate()?;
        self.stability.validate()?;
        if sched.algorithm == Algorithm::Noop && self.kind != BackendKind::Bulk {
            return Err(ExecError::InvalidBackend(
                "the noop scheduler only forwards tasks; it needs the bulk backend".into(),
            ));
        }
        if self.kind == BackendKind::Partitioned && desc.partition_plan.is_none() {
            return Err(ExecError::InvalidBackend("partitioned backend needs a partition plan".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Internal,
    LostConnection,
}

/// A started partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionInfo {
    pub id: usize,
    pub nodes: Range<usize>,
    pub start: Micros,
    pub ready: Micros,
    pub alive: bool,
    /// Fault fired at the given launch ordinal (1-based).
    pub fault: Option<(FaultKind, u64)>,
}

/// Starts partitions one after the other from `t0`. Returns the partitions
/// and the total elapsed startup time.
pub fn start_partitions(
    plan: &PartitionPlan,
    limits: &StabilityLimits,
    t0: Micros,
    rng: &mut impl Rng,
) -> (Vec<PartitionInfo>, Micros) {
    let unstable = limits.unstable(plan);
    let step = time::from_secs(plan.per_partition_start_cost_s + plan.post_start_sleep_s);
    let mut out = Vec::with_capacity(plan.partition_count);
    let mut t = t0;
    for id in 0..plan.partition_count {
        let (alive, fault) = if unstable {
            let alive = rng.random::<f64>() >= limits.startup_failure;
            let u: f64 = rng.random();
            let k = rng.random_range(1..=limits.stable_max_tasks);
            let fault = if u < limits.internal_failure {
                Some((FaultKind::Internal, k))
            } else if u < limits.internal_failure + limits.lost_connection {
                Some((FaultKind::LostConnection, k))
            } else {
                None
            };
            (alive, fault)
        } else {
            (true, None)
        };
        out.push(PartitionInfo { id, nodes: plan.range(id), start: t, ready: t + step, alive, fault });
        t += step;
    }
    (out, t - t0)
}

/// Events handled by the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentEvent {
    PilotActive,
    PartitionUp(usize),
    BackendReady,
    LaunchDone { lane: usize, task: TaskId },
    ExecEnd(TaskId),
    BulkAdmit,
    Walltime,
}

/// Events of a whole session: agent events and client timers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ev {
    Agent(AgentEvent),
    Client(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinishedTask {
    pub task_id: TaskId,
    pub name: String,
    pub state: TaskState,
    pub time: Micros,
}

struct Partition {
    info: PartitionInfo,
    up: bool,
    assigned: u64,
    launches: u64,
}

struct Active {
    desc: TaskDescription,
    state: TaskState,
    placement: Option<Placement>,
    partition: Option<usize>,
}

/// The pilot agent: scheduler, launch lanes and payload bookkeeping.
pub struct Agent {
    desc: PilotDescription,
    backend: BackendConfig,
    nodes: Vec<NodeState>,
    scheduler: Scheduler,
    bulk_scheduler: Scheduler,
    queue: TaskQueue,
    partitions: Vec<Partition>,
    launch_delay: Micros,
    lane_holder: Vec<Option<TaskId>>,
    lane_queue: VecDeque<TaskId>,
    bulk_queue: VecDeque<TaskId>,
    bulk_next: Micros,
    bulk_timer: bool,
    tasks: HashMap<TaskId, Active>,
    finished: Vec<FinishedTask>,
    ready: bool,
    stopped: bool,
    rng: ChaCha8Rng,
    log: EventLog,
}

impl Agent {
    pub fn new(desc: PilotDescription, sched: SchedulerConfig, backend: BackendConfig) -> Result<Self, ExecError> {
        backend.validate(&desc, &sched)?;
        let pilot = acquire(desc.clone())?;
        let shape = desc.resource.node_shape();
        let scheduler = Scheduler::new(sched);
        let queue = scheduler.new_queue(&shape);
        let (launch_delay, lanes) = match backend.kind {
            BackendKind::Partitioned => {
                let plan = desc.partition_plan.as_ref().expect("validated");
                (time::from_secs(plan.per_launch_delay_s), plan.lanes)
            }
            BackendKind::Direct => (time::from_secs(backend.launch_delay_s), backend.lanes),
            BackendKind::Bulk => (0, 1),
        };
        let mut log = EventLog::new();
        log.push(LogRow::Pilot(PilotRow {
            name: desc.resource.name.clone(),
            nodes: desc.resource.nodes.len(),
            cores_per_node: shape.usable_cpu_cores,
            gpus_per_node: shape.gpus,
            reserved_nodes: 0,
            startup_latency_us: time::from_secs(desc.startup_latency_s),
            walltime_us: time::from_secs(desc.walltime_s),
            backend: backend.kind.as_str().into(),
            flavor: backend.flavor.as_str().into(),
        }));
        Ok(Agent {
            rng: ChaCha8Rng::seed_from_u64(backend.seed),
            desc,
            nodes: pilot.nodes,
            scheduler,
            bulk_scheduler: Scheduler::new(SchedulerConfig::arrival_order()),
            queue,
            partitions: Vec::new(),
            launch_delay,
            lane_holder: vec![None; lanes],
            lane_queue: VecDeque::new(),
            bulk_queue: VecDeque::new(),
            bulk_next: 0,
            bulk_timer: false,
            tasks: HashMap::new(),
            finished: Vec::new(),
            ready: false,
            stopped: false,
            backend,
            log,
        })
    }

    pub fn start(&mut self, d: &mut dyn Driver<Ev>) {
        d.schedule(time::from_secs(self.desc.startup_latency_s), Ev::Agent(AgentEvent::PilotActive));
        d.schedule(time::from_secs(self.desc.walltime_s), Ev::Agent(AgentEvent::Walltime));
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// No task is queued, waiting, launching or running.
    pub fn is_idle(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn scheduler_stats(&self) -> &SchedulerStats {
        self.scheduler.stats()
    }

    pub fn take_finished(&mut self) -> Vec<FinishedTask> {
        std::mem::take(&mut self.finished)
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn submit(&mut self, now: Micros, task: TaskDescription) {
        let mut row = TaskRow::new(now, task.task_id, TaskState::Queued);
        row.name.clone_from(&task.name);
        self.log.task(row);
        if self.stopped {
            self.finish(now, task.task_id, &task.name, TaskState::Lost);
            return;
        }
        let id = task.task_id;
        assert!(!self.tasks.contains_key(&id), "{id} submitted twice");
        self.tasks.insert(id, Active { desc: task.clone(), state: TaskState::Queued, placement: None, partition: None });
        self.queue.push(task);
    }

    pub fn handle(&mut self, now: Micros, ev: AgentEvent, d: &mut dyn Driver<Ev>) {
        if self.stopped {
            return;
        }
        match ev {
            AgentEvent::PilotActive => self.activate(now, d),
            AgentEvent::PartitionUp(p) => {
                let part = &mut self.partitions[p];
                part.up = true;
                let info = &part.info;
                self.log.push(LogRow::Partition(PartitionRow {
                    partition: p,
                    start_us: info.start,
                    ready_us: info.ready,
                    first_node: info.nodes.start,
                    node_count: info.nodes.len(),
                    alive: info.alive,
                }));
                if p + 1 == self.partitions.len() {
                    d.schedule(now, Ev::Agent(AgentEvent::BackendReady));
                }
            }
            AgentEvent::BackendReady => {
                self.ready = true;
                log::debug!("backend ready at {now}us");
            }
            AgentEvent::LaunchDone { lane, task } => {
                if self.lane_holder[lane] != Some(task) {
                    return;
                }
                self.lane_holder[lane] = None;
                self.start_running(now, task, d);
                self.pump_lanes(now, d);
            }
            AgentEvent::ExecEnd(task) => self.exec_end(now, task, PayloadOutcome::ok(), d),
            AgentEvent::BulkAdmit => {
                self.bulk_timer = false;
                self.admit_bulk(now, d);
            }
            AgentEvent::Walltime => self.walltime(now),
        }
    }

    fn activate(&mut self, now: Micros, d: &mut dyn Driver<Ev>) {
        match self.backend.kind {
            BackendKind::Direct => {
                let all = 0..self.nodes.len();
                self.partitions.push(Partition {
                    info: PartitionInfo { id: 0, nodes: all, start: now, ready: now, alive: true, fault: None },
                    up: true,
                    assigned: 0,
                    launches: 0,
                });
                d.schedule(now, Ev::Agent(AgentEvent::BackendReady));
            }
            BackendKind::Partitioned => {
                let plan = self.desc.partition_plan.clone().expect("validated");
                let (infos, elapsed) = start_partitions(&plan, &self.backend.stability, now, &mut self.rng);
                log::info!("starting {} partitions, {}s", infos.len(), time::to_secs(elapsed));
                for info in infos {
                    d.schedule(info.ready, Ev::Agent(AgentEvent::PartitionUp(info.id)));
                    self.partitions.push(Partition { info, up: false, assigned: 0, launches: 0 });
                }
            }
            BackendKind::Bulk => {
                let at = now + time::from_secs(self.backend.bulk.startup_cost_s);
                d.schedule(at, Ev::Agent(AgentEvent::BackendReady));
            }
        }
    }

    /// One scheduling pass; runs at the end of each batch of same-time events.
    pub fn schedule_pass(&mut self, now: Micros, d: &mut dyn Driver<Ev>) {
        if !self.ready || self.stopped || self.queue.is_empty() {
            return;
        }
        if self.backend.kind == BackendKind::Bulk {
            let batch = self.scheduler.schedule_noop(self.queue.drain());
            for task in batch {
                let a = self.tasks.get_mut(&task.task_id).expect("queued task is active");
                a.state = TaskState::Scheduled;
                self.log.task(TaskRow::new(now, task.task_id, TaskState::Scheduled));
                self.bulk_queue.push_back(task.task_id);
            }
            self.admit_bulk(now, d);
            return;
        }
        let open: Vec<usize> = self
            .partitions
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p.up && p.info.alive
                    && self
                        .desc
                        .partition_plan
                        .as_ref()
                        .and_then(|pl| pl.max_tasks_per_partition)
                        .is_none_or(|cap| p.assigned < cap)
            })
            .map(|(i, _)| i)
            .collect();
        let groups: Vec<Range<usize>> = open.iter().map(|&i| self.partitions[i].info.nodes.clone()).collect();
        let pass = self.scheduler.schedule_queue(&mut self.queue, &mut self.nodes, &groups);
        let partitioned = self.backend.kind == BackendKind::Partitioned;
        for (task, placement, g) in pass.placed {
            let pid = open[g];
            self.partitions[pid].assigned += 1;
            let mut row = TaskRow::new(now, task.task_id, TaskState::Scheduled);
            row.placement = Some(placement.slots.clone());
            row.partition = partitioned.then_some(pid);
            self.log.task(row);
            let a = self.tasks.get_mut(&task.task_id).expect("placed task is active");
            a.state = TaskState::Scheduled;
            a.placement = Some(placement);
            a.partition = Some(pid);
            self.lane_queue.push_back(task.task_id);
        }
        for (task, err) in pass.rejected {
            log::warn!("{err}");
            self.tasks.remove(&task.task_id);
            self.finish(now, task.task_id, &task.name, TaskState::Failed);
        }
        self.pump_lanes(now, d);
    }

    fn pump_lanes(&mut self, now: Micros, d: &mut dyn Driver<Ev>) {
        while let Some(lane) = self.lane_holder.iter().position(Option::is_none) {
            let Some(id) = self.lane_queue.pop_front() else { return };
            self.lane_holder[lane] = Some(id);
            let a = self.tasks.get_mut(&id).expect("lane task is active");
            a.state = TaskState::Launching;
            let pid = a.partition.expect("scheduled task has a partition");
            self.log.task(TaskRow::new(now, id, TaskState::Launching));
            d.schedule(now + self.launch_delay, Ev::Agent(AgentEvent::LaunchDone { lane, task: id }));
            let part = &mut self.partitions[pid];
            part.launches += 1;
            if let Some((kind, k)) = part.info.fault {
                if part.launches == k {
                    self.partition_fault(now, pid, kind);
                }
            }
        }
    }

    fn partition_fault(&mut self, now: Micros, pid: usize, kind: FaultKind) {
        log::warn!("partition {pid} failed at {now}us: {kind:?}");
        self.partitions[pid].info.alive = false;
        let info = &self.partitions[pid].info;
        self.log.push(LogRow::Partition(PartitionRow {
            partition: pid,
            start_us: info.start,
            ready_us: info.ready,
            first_node: info.nodes.start,
            node_count: info.nodes.len(),
            alive: false,
        }));
        let mut victims: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|(_, a)| a.partition == Some(pid))
            .map(|(id, _)| *id)
            .collect();
        victims.sort();
        let terminal = match kind {
            FaultKind::Internal => TaskState::Failed,
            FaultKind::LostConnection => TaskState::Lost,
        };
        for id in victims {
            let a = self.tasks.get(&id).expect("victim is active");
            if a.state == TaskState::Scheduled {
                // Not launched yet: back to the queue.
                self.lane_queue.retain(|t| *t != id);
                let mut a = self.tasks.remove(&id).expect("victim");
                self.release(&mut a);
                self.log.task(TaskRow::new(now, id, TaskState::Queued));
                a.state = TaskState::Queued;
                a.partition = None;
                self.queue.push(a.desc.clone());
                self.tasks.insert(id, a);
            } else {
                for h in self.lane_holder.iter_mut() {
                    if *h == Some(id) {
                        *h = None;
                    }
                }
                self.terminate(now, id, terminal, None);
            }
        }
    }

    fn start_running(&mut self, now: Micros, id: TaskId, d: &mut dyn Driver<Ev>) {
        let a = self.tasks.get_mut(&id).expect("launched task is active");
        a.state = TaskState::Running;
        self.log.task(TaskRow::new(now, id, TaskState::Running));
        let duration = time::from_secs(a.desc.payload.duration_s());
        d.spawn_payload(Ev::Agent(AgentEvent::ExecEnd(id)), &a.desc.payload, duration);
    }

    /// Payload of `id` ended.
    pub fn exec_end(&mut self, now: Micros, id: TaskId, outcome: PayloadOutcome, d: &mut dyn Driver<Ev>) {
        if self.stopped {
            return;
        }
        match self.tasks.get(&id) {
            Some(a) if a.state == TaskState::Running => {}
            // Killed by a partition fault; the payload result is moot.
            _ => return,
        }
        let state = if outcome.success { TaskState::Done } else { TaskState::Failed };
        if let Some(detail) = &outcome.detail {
            log::warn!("{id}: {detail}");
        }
        self.terminate(now, id, state, None);
        if self.backend.kind == BackendKind::Bulk {
            self.admit_bulk(now, d);
        }
    }

    fn release(&mut self, a: &mut Active) {
        if let Some(p) = a.placement.take() {
            release_all(&mut self.nodes, &p).expect("agent releases what it placed");
            self.scheduler.task_finished(p.task_id);
            self.bulk_scheduler.task_finished(p.task_id);
        }
    }

    fn terminate(&mut self, now: Micros, id: TaskId, state: TaskState, exec_end: Option<Micros>) {
        let mut a = self.tasks.remove(&id).expect("terminating an active task");
        self.release(&mut a);
        let mut row = TaskRow::new(now, id, state);
        row.exec_end_us = exec_end;
        self.log.task(row);
        self.finished.push(FinishedTask { task_id: id, name: a.desc.name, state, time: now });
    }

    fn finish(&mut self, now: Micros, id: TaskId, name: &str, state: TaskState) {
        self.log.task(TaskRow::new(now, id, state));
        self.finished.push(FinishedTask { task_id: id, name: name.to_string(), state, time: now });
    }

    fn admit_bulk(&mut self, now: Micros, d: &mut dyn Driver<Ev>) {
        let interval = self.backend.bulk.interval();
        // one range covering every node
        #[allow(clippy::single_range_in_vec_init)]
        let all = [0..self.nodes.len()];
        while let Some(&id) = self.bulk_queue.front() {
            if now < self.bulk_next {
                if !self.bulk_timer {
                    self.bulk_timer = true;
                    d.schedule(self.bulk_next, Ev::Agent(AgentEvent::BulkAdmit));
                }
                return;
            }
            let desc = &self.tasks[&id].desc;
            if let Err(err) = self.bulk_scheduler.check_feasible(desc, &self.nodes, &all) {
                log::warn!("{err}");
                self.bulk_queue.pop_front();
                let a = self.tasks.remove(&id).expect("bulk task");
                self.finish(now, id, &a.desc.name, TaskState::Failed);
                continue;
            }
            // Head-of-line: wait for a release if the head does not fit.
            let Some((placement, _)) = self.bulk_scheduler.first_fit(desc, &self.nodes, &all) else { return };
            self.bulk_queue.pop_front();
            crate::resource::occupy_all(&mut self.nodes, &placement).expect("first fit over free slots");
            self.bulk_scheduler.note_placed(desc, &placement);
            let mut row = TaskRow::new(now, id, TaskState::Launching);
            row.placement = Some(placement.slots.clone());
            self.log.task(row);
            let a = self.tasks.get_mut(&id).expect("bulk task");
            a.state = TaskState::Launching;
            a.placement = Some(placement);
            self.start_running(now, id, d);
            self.bulk_next = now + interval;
        }
    }

    fn walltime(&mut self, now: Micros) {
        let mut ids: Vec<TaskId> = self.tasks.keys().copied().collect();
        ids.sort();
        if !ids.is_empty() {
            log::warn!("walltime reached at {now}us with {} unfinished tasks", ids.len());
        }
        for id in ids {
            self.terminate(now, id, TaskState::Lost, None);
        }
        self.queue.drain();
        self.lane_queue.clear();
        self.bulk_queue.clear();
        self.stopped = true;
    }
}

/// Collects a client's submissions and timer requests during one callback.
#[derive(Debug, Default)]
pub struct ClientCx {
    now: Micros,
    submissions: Vec<TaskDescription>,
    timers: Vec<(Micros, u64)>,
}

impl ClientCx {
    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn submit(&mut self, task: TaskDescription) {
        self.submissions.push(task);
    }

    /// Calls back `on_timer(token)` after `delay`.
    pub fn after(&mut self, delay: Micros, token: u64) {
        self.timers.push((self.now + delay, token));
    }
}

/// Whatever sits above the agent and submits tasks.
pub trait Client {
    fn start(&mut self, cx: &mut ClientCx);
    fn on_task_finished(&mut self, cx: &mut ClientCx, task: &FinishedTask);
    fn on_timer(&mut self, _cx: &mut ClientCx, _token: u64) {}
    fn is_done(&self) -> bool;
}

/// Submits a fixed set of tasks at time zero.
pub struct BagClient {
    tasks: Vec<TaskDescription>,
    outstanding: usize,
}

impl BagClient {
    pub fn new(tasks: Vec<TaskDescription>) -> Self {
        BagClient { outstanding: tasks.len(), tasks }
    }
}

impl Client for BagClient {
    fn start(&mut self, cx: &mut ClientCx) {
        for t in self.tasks.drain(..) {
            cx.submit(t);
        }
    }

    fn on_task_finished(&mut self, _cx: &mut ClientCx, _task: &FinishedTask) {
        self.outstanding -= 1;
    }

    fn is_done(&self) -> bool {
        self.outstanding == 0
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub log: EventLog,
    pub done: u64,
    pub failed: u64,
    pub lost: u64,
    pub end: Micros,
    pub scheduler_stats: SchedulerStats,
}

impl SessionOutcome {
    pub fn total(&self) -> u64 {
        self.done + self.failed + self.lost
    }

    pub fn completion_fraction(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            self.done as f64 / self.total() as f64
        }
    }
}

fn apply_cx(agent: &mut Agent, d: &mut dyn Driver<Ev>, cx: ClientCx) {
    for t in cx.submissions {
        agent.submit(cx.now, t);
    }
    for (at, token) in cx.timers {
        d.schedule(at, Ev::Client(token));
    }
}

/// Runs `client` on a fresh pilot until it is done and the agent is idle,
/// or until walltime.
pub fn run_session(
    desc: &PilotDescription,
    sched: &SchedulerConfig,
    backend: &BackendConfig,
    client: &mut dyn Client,
) -> Result<SessionOutcome, ExecError> {
    let agent = Agent::new(desc.clone(), sched.clone(), backend.clone())?;
    let out = match backend.flavor {
        Flavor::Sim => drive(agent, &mut SimDriver::new(), client),
        Flavor::Real => drive(agent, &mut RealDriver::new(backend.real_mode), client),
    };
    Ok(out)
}

fn drive(mut agent: Agent, d: &mut dyn Driver<Ev>, client: &mut dyn Client) -> SessionOutcome {
    agent.start(d);
    let mut cx = ClientCx { now: 0, ..Default::default() };
    client.start(&mut cx);
    apply_cx(&mut agent, d, cx);
    let mut counts = [0u64; 3];
    let mut end = 0;
    loop {
        if client.is_done() && agent.is_idle() {
            break;
        }
        let Some((now, fired)) = d.next() else {
            log::warn!("event queue drained before the client finished");
            break;
        };
        end = now;
        match fired {
            Fired::Timer(Ev::Agent(ev)) => agent.handle(now, ev, d),
            Fired::Payload(Ev::Agent(AgentEvent::ExecEnd(id)), outcome) => agent.exec_end(now, id, outcome, d),
            Fired::Payload(ev, _) => unreachable!("unexpected payload event {ev:?}"),
            Fired::Timer(Ev::Client(token)) => {
                let mut cx = ClientCx { now, ..Default::default() };
                client.on_timer(&mut cx, token);
                apply_cx(&mut agent, d, cx);
            }
        }
        deliver(&mut agent, d, client, now, &mut counts);
        if agent.is_stopped() {
            break;
        }
        if !d.has_due() {
            agent.schedule_pass(now, d);
            deliver(&mut agent, d, client, now, &mut counts);
        }
    }
    let scheduler_stats = agent.scheduler_stats().clone();
    let mut log = agent.into_log();
    log.push(LogRow::PilotEnd { time_us: end });
    let [done, failed, lost] = counts;
    SessionOutcome { log, done, failed, lost, end, scheduler_stats }
}

/// Hands finished tasks to the client until no more finish at `now`.
fn deliver(agent: &mut Agent, d: &mut dyn Driver<Ev>, client: &mut dyn Client, now: Micros, counts: &mut [u64; 3]) {
    loop {
        let finished = agent.take_finished();
        if finished.is_empty() {
            return;
        }
        let mut cx = ClientCx { now, ..Default::default() };
        for f in &finished {
            let slot = match f.state {
                TaskState::Done => 0,
                TaskState::Failed => 1,
                _ => 2,
            };
            counts[slot] += 1;
            client.on_task_finished(&mut cx, f);
        }
        apply_cx(agent, d, cx);
    }
}
