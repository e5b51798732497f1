// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Pilot-based execution of heterogeneous CPU/GPU task workloads.
//!
//! A pilot acquires a block of nodes once; everything else runs inside it:
//!
//! * [`resource`] tracks nodes and per-core / per-GPU occupancy.
//! * [`scheduler`] maps task descriptions onto free slots (continuous and
//!   noop algorithms).
//! * [`executor`] launches placed tasks through a direct, partitioned or bulk
//!   backend, either on a simulated clock or as real OS processes.
//! * [`overlay`] is a master/worker layer that farms fine-grained work items
//!   to per-node workers.
//! * [`workflow`] runs pipelines of stages with adaptive iteration.
//! * [`workload`] generates long-tailed task durations.
//! * [`metrics`] turns event logs into utilization, rate and overhead reports.

pub mod driver;
pub mod executor;
pub mod log;
pub mod metrics;
pub mod overlay;
pub mod resource;
pub mod scheduler;
pub mod time;
pub mod workflow;
pub mod workload;

pub use crate::executor::{
    BackendConfig, BackendKind, BulkBackendConfig, Flavor, PartitionPlan, SessionOutcome,
    StabilityLimits,
};
pub use crate::log::{EventLog, LogRow, TaskRecord, TaskState};
pub use crate::metrics::{OverheadReport, RateSeries, UtilizationReport};
pub use crate::resource::{
    acquire, NodeSlots, NodeSpec, NodeState, PilotDescription, Placement, ResourceSpec, TaskId,
};
pub use crate::scheduler::{
    Algorithm, Colocation, Payload, Scheduler, SchedulerConfig, TaskDescription,
};
pub use crate::time::Micros;
pub use crate::workload::{DurationModel, WorkloadPreset};
