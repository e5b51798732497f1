// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Cluster shape, pilot acquisition and slot-level occupancy.
//!
//! A pilot holds a list of homogeneous nodes. Every usable core and every GPU
//! of a node is a slot that is either free or owned by exactly one task.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::PartitionPlan;
use crate::time::{self, Micros};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task.{:06}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Core,
    Gpu,
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotKind::Core => f.write_str("core"),
            SlotKind::Gpu => f.write_str("gpu"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("resource spec has no nodes")]
    EmptyResource,
    #[error("node {node_id}: {reason}")]
    InvalidNode { node_id: usize, reason: String },
    #[error("node {node_id} differs from node 0; pilots must be homogeneous")]
    Heterogeneous { node_id: usize },
    #[error("invalid pilot description: {0}")]
    InvalidPilot(String),
    #[error("unknown node preset {0:?}")]
    UnknownPreset(String),
    #[error("placement references {kind} {id} on node {node_id}, which does not exist")]
    UnknownSlot { node_id: usize, kind: SlotKind, id: u32 },
    #[error("placement lists {kind} {id} on node {node_id} twice")]
    DuplicateSlot { node_id: usize, kind: SlotKind, id: u32 },
    #[error("{kind} {id} on node {node_id} is already held by {holder}")]
    OccupancyConflict { node_id: usize, kind: SlotKind, id: u32, holder: TaskId },
    #[error("{kind} {id} on node {node_id} is not held by {expected} (holder: {found:?})")]
    Ownership {
        node_id: usize,
        kind: SlotKind,
        id: u32,
        expected: TaskId,
        found: Option<TaskId>,
    },
}

/// One compute node. Only the first `usable_cpu_cores` cores are schedulable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: usize,
    pub cpu_cores: u32,
    pub gpus: u32,
    pub usable_cpu_cores: u32,
}

impl NodeSpec {
    pub fn new(node_id: usize, cpu_cores: u32, gpus: u32) -> Self {
        NodeSpec { node_id, cpu_cores, gpus, usable_cpu_cores: cpu_cores }
    }

    pub fn with_usable_cores(mut self, usable: u32) -> Self {
        self.usable_cpu_cores = usable;
        self
    }

    /// Named node types.
    ///
    /// `summit-node` exposes 42 schedulable cores even though the hardware
    /// has 2 x 22; two cores per node are kept for the system.
    pub fn preset(name: &str) -> Result<NodeSpec, ResourceError> {
        match name {
            "summit-node" => Ok(NodeSpec::new(0, 42, 6)),
            "frontera-node" => Ok(NodeSpec::new(0, 56, 0).with_usable_cores(34)),
            "lassen-node" => Ok(NodeSpec::new(0, 44, 4)),
            other => Err(ResourceError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.usable_cpu_cores > self.cpu_cores {
            return Err(ResourceError::InvalidNode {
                node_id: self.node_id,
                reason: format!(
                    "usable_cpu_cores {} exceeds cpu_cores {}",
                    self.usable_cpu_cores, self.cpu_cores
                ),
            });
        }
        if self.usable_cpu_cores == 0 && self.gpus == 0 {
            return Err(ResourceError::InvalidNode {
                node_id: self.node_id,
                reason: "node has no schedulable slots".into(),
            });
        }
        Ok(())
    }

    fn same_shape(&self, other: &NodeSpec) -> bool {
        self.cpu_cores == other.cpu_cores
            && self.gpus == other.gpus
            && self.usable_cpu_cores == other.usable_cpu_cores
    }
}

pub const PRESET_NAMES: &[&str] = &["summit-node", "frontera-node", "lassen-node"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
}

impl ResourceSpec {
    /// `count` copies of `template`, numbered from 0.
    pub fn homogeneous(name: impl Into<String>, count: usize, template: NodeSpec) -> Self {
        let nodes = (0..count).map(|node_id| NodeSpec { node_id, ..template }).collect();
        ResourceSpec { name: name.into(), nodes }
    }

    pub fn from_preset(preset: &str, count: usize) -> Result<Self, ResourceError> {
        Ok(Self::homogeneous(preset, count, NodeSpec::preset(preset)?))
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        let first = self.nodes.first().ok_or(ResourceError::EmptyResource)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            node.validate()?;
            if node.node_id != idx {
                return Err(ResourceError::InvalidNode {
                    node_id: node.node_id,
                    reason: format!("node ids must be dense; expected {idx}"),
                });
            }
            if !node.same_shape(first) {
                return Err(ResourceError::Heterogeneous { node_id: node.node_id });
            }
        }
        Ok(())
    }

    /// Shape shared by all nodes.
    pub fn node_shape(&self) -> NodeSpec {
        self.nodes[0]
    }

    pub fn total_usable_cores(&self) -> u64 {
        self.nodes.iter().map(|n| n.usable_cpu_cores as u64).sum()
    }

    pub fn total_gpus(&self) -> u64 {
        self.nodes.iter().map(|n| n.gpus as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotDescription {
    pub resource: ResourceSpec,
    pub walltime_s: f64,
    pub startup_latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_plan: Option<PartitionPlan>,
}

impl PilotDescription {
    pub fn new(resource: ResourceSpec, walltime_s: f64) -> Self {
        PilotDescription { resource, walltime_s, startup_latency_s: 0.0, partition_plan: None }
    }

    pub fn with_startup_latency(mut self, secs: f64) -> Self {
        self.startup_latency_s = secs;
        self
    }

    pub fn with_partitions(mut self, plan: PartitionPlan) -> Self {
        self.partition_plan = Some(plan);
        self
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        self.resource.validate()?;
        if !(self.walltime_s.is_finite() && self.walltime_s > 0.0) {
            return Err(ResourceError::InvalidPilot(format!(
                "walltime must be positive, got {}",
                self.walltime_s
            )));
        }
        if !(self.startup_latency_s.is_finite() && self.startup_latency_s >= 0.0) {
            return Err(ResourceError::InvalidPilot(format!(
                "startup latency must be non-negative, got {}",
                self.startup_latency_s
            )));
        }
        if let Some(plan) = &self.partition_plan {
            plan.validate(self.resource.nodes.len())
                .map_err(|e| ResourceError::InvalidPilot(e.to_string()))?;
        }
        Ok(())
    }
}

/// The slots a placement holds on one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSlots {
    #[serde(rename = "node")]
    pub node_id: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cores: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gpus: Vec<u32>,
}

/// Slot assignment of one task, possibly spanning nodes (MPI).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub task_id: TaskId,
    pub slots: Vec<NodeSlots>,
}

impl Placement {
    pub fn core_count(&self) -> u64 {
        self.slots.iter().map(|s| s.cores.len() as u64).sum()
    }

    pub fn gpu_count(&self) -> u64 {
        self.slots.iter().map(|s| s.gpus.len() as u64).sum()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().map(|s| s.node_id)
    }
}

/// Occupancy of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    spec: NodeSpec,
    cores: Vec<Option<TaskId>>,
    gpus: Vec<Option<TaskId>>,
    free_cores: u32,
    free_gpus: u32,
}

impl NodeState {
    pub fn new(spec: NodeSpec) -> Self {
        NodeState {
            spec,
            cores: vec![None; spec.usable_cpu_cores as usize],
            gpus: vec![None; spec.gpus as usize],
            free_cores: spec.usable_cpu_cores,
            free_gpus: spec.gpus,
        }
    }

    pub fn spec(&self) -> &NodeSpec {
        &self.spec
    }

    pub fn node_id(&self) -> usize {
        self.spec.node_id
    }

    pub fn free_cores(&self) -> u32 {
        self.free_cores
    }

    pub fn free_gpus(&self) -> u32 {
        self.free_gpus
    }

    pub fn busy_slots(&self) -> u32 {
        (self.spec.usable_cpu_cores - self.free_cores) + (self.spec.gpus - self.free_gpus)
    }

    pub fn is_idle(&self) -> bool {
        self.busy_slots() == 0
    }

    pub fn core_holder(&self, core: u32) -> Option<TaskId> {
        self.cores.get(core as usize).copied().flatten()
    }

    pub fn gpu_holder(&self, gpu: u32) -> Option<TaskId> {
        self.gpus.get(gpu as usize).copied().flatten()
    }

    /// Lowest-numbered free cores, if at least `n` are free.
    pub fn lowest_free_cores(&self, n: u32) -> Option<Vec<u32>> {
        lowest_free(&self.cores, n, self.free_cores)
    }

    pub fn lowest_free_gpus(&self, n: u32) -> Option<Vec<u32>> {
        lowest_free(&self.gpus, n, self.free_gpus)
    }

    fn check(&self, slots: &NodeSlots) -> Result<(), ResourceError> {
        let node_id = self.spec.node_id;
        for (kind, ids, table) in [
            (SlotKind::Core, &slots.cores, &self.cores),
            (SlotKind::Gpu, &slots.gpus, &self.gpus),
        ] {
            let mut seen = vec![false; table.len()];
            for &id in ids {
                let idx = id as usize;
                if idx >= table.len() {
                    return Err(ResourceError::UnknownSlot { node_id, kind, id });
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(ResourceError::DuplicateSlot { node_id, kind, id });
                }
            }
        }
        Ok(())
    }

    /// Marks the slots as held by `task`. Nothing changes on error.
    pub fn occupy(&mut self, task: TaskId, slots: &NodeSlots) -> Result<(), ResourceError> {
        self.check(slots)?;
        let node_id = self.spec.node_id;
        for &c in &slots.cores {
            if let Some(holder) = self.cores[c as usize] {
                return Err(ResourceError::OccupancyConflict {
                    node_id,
                    kind: SlotKind::Core,
                    id: c,
                    holder,
                });
            }
        }
        for &g in &slots.gpus {
            if let Some(holder) = self.gpus[g as usize] {
                return Err(ResourceError::OccupancyConflict {
                    node_id,
                    kind: SlotKind::Gpu,
                    id: g,
                    holder,
                });
            }
        }
        for &c in &slots.cores {
            self.cores[c as usize] = Some(task);
        }
        for &g in &slots.gpus {
            self.gpus[g as usize] = Some(task);
        }
        self.free_cores -= slots.cores.len() as u32;
        self.free_gpus -= slots.gpus.len() as u32;
        Ok(())
    }

    /// Frees slots held by `task`. Nothing changes on error.
    pub fn release(&mut self, task: TaskId, slots: &NodeSlots) -> Result<(), ResourceError> {
        self.check(slots)?;
        let node_id = self.spec.node_id;
        for (kind, ids, table) in [
            (SlotKind::Core, &slots.cores, &self.cores),
            (SlotKind::Gpu, &slots.gpus, &self.gpus),
        ] {
            for &id in ids {
                let found = table[id as usize];
                if found != Some(task) {
                    return Err(ResourceError::Ownership { node_id, kind, id, expected: task, found });
                }
            }
        }
        for &c in &slots.cores {
            self.cores[c as usize] = None;
        }
        for &g in &slots.gpus {
            self.gpus[g as usize] = None;
        }
        self.free_cores += slots.cores.len() as u32;
        self.free_gpus += slots.gpus.len() as u32;
        Ok(())
    }
}

fn lowest_free(table: &[Option<TaskId>], n: u32, free: u32) -> Option<Vec<u32>> {
    if n > free {
        return None;
    }
    Some(
        table
            .iter()
            .enumerate()
            .filter(|(_, holder)| holder.is_none())
            .map(|(i, _)| i as u32)
            .take(n as usize)
            .collect(),
    )
}

/// Occupies a multi-node placement atomically.
pub fn occupy_all(nodes: &mut [NodeState], placement: &Placement) -> Result<(), ResourceError> {
    validate_nodes(nodes, placement)?;
    for (done, slots) in placement.slots.iter().enumerate() {
        if let Err(e) = nodes[slots.node_id].occupy(placement.task_id, slots) {
            for undo in &placement.slots[..done] {
                nodes[undo.node_id]
                    .release(placement.task_id, undo)
                    .expect("rollback of a just-occupied slot set");
            }
            return Err(e);
        }
    }
    Ok(())
}

/// Releases a multi-node placement atomically.
pub fn release_all(nodes: &mut [NodeState], placement: &Placement) -> Result<(), ResourceError> {
    validate_nodes(nodes, placement)?;
    for (done, slots) in placement.slots.iter().enumerate() {
        if let Err(e) = nodes[slots.node_id].release(placement.task_id, slots) {
            for undo in &placement.slots[..done] {
                nodes[undo.node_id]
                    .occupy(placement.task_id, undo)
                    .expect("rollback of a just-released slot set");
            }
            return Err(e);
        }
    }
    Ok(())
}

fn validate_nodes(nodes: &[NodeState], placement: &Placement) -> Result<(), ResourceError> {
    let mut seen = std::collections::BTreeSet::new();
    for slots in &placement.slots {
        if slots.node_id >= nodes.len() {
            let (kind, id) = match (slots.cores.first(), slots.gpus.first()) {
                (Some(&c), _) => (SlotKind::Core, c),
                (None, Some(&g)) => (SlotKind::Gpu, g),
                (None, None) => (SlotKind::Core, 0),
            };
            return Err(ResourceError::UnknownSlot { node_id: slots.node_id, kind, id });
        }
        if !seen.insert(slots.node_id) {
            return Err(ResourceError::InvalidNode {
                node_id: slots.node_id,
                reason: "node appears twice in one placement".into(),
            });
        }
    }
    Ok(())
}

/// An acquired pilot: free nodes, a clock, and a walltime deadline.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub desc: PilotDescription,
    pub nodes: Vec<NodeState>,
    /// Time at which the pilot becomes usable.
    pub clock: Micros,
    pub walltime_deadline: Micros,
}

impl Pilot {
    pub fn free_cores(&self) -> u64 {
        self.nodes.iter().map(|n| n.free_cores() as u64).sum()
    }

    pub fn free_gpus(&self) -> u64 {
        self.nodes.iter().map(|n| n.free_gpus() as u64).sum()
    }

    pub fn occupy(&mut self, placement: &Placement) -> Result<(), ResourceError> {
        occupy_all(&mut self.nodes, placement)
    }

    pub fn release(&mut self, placement: &Placement) -> Result<(), ResourceError> {
        release_all(&mut self.nodes, placement)
    }
}

/// Acquires the resources described by `desc`.
pub fn acquire(desc: PilotDescription) -> Result<Pilot, ResourceError> {
    desc.validate()?;
    let nodes = desc.resource.nodes.iter().copied().map(NodeState::new).collect();
    let clock = time::from_secs(desc.startup_latency_s);
    let walltime_deadline = time::from_secs(desc.walltime_s);
    Ok(Pilot { desc, nodes, clock, walltime_deadline })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(node_id: usize, cores: &[u32], gpus: &[u32]) -> NodeSlots {
        NodeSlots { node_id, cores: cores.to_vec(), gpus: gpus.to_vec() }
    }

    #[test]
    fn acquire_summit_pair() {
        let desc = PilotDescription::new(ResourceSpec::from_preset("summit-node", 2).unwrap(), 3600.0);
        let pilot = acquire(desc).unwrap();
        assert_eq!(pilot.free_cores(), 84);
        assert_eq!(pilot.free_gpus(), 12);
        assert_eq!(pilot.clock, 0);
    }

    #[test]
    fn acquire_single_core() {
        let spec = ResourceSpec::homogeneous("tiny", 1, NodeSpec::new(0, 1, 0));
        let pilot = acquire(PilotDescription::new(spec, 60.0)).unwrap();
        assert_eq!(pilot.free_cores(), 1);
        assert_eq!(pilot.free_gpus(), 0);
    }

    #[test]
    fn acquire_frontera_usable_cores() {
        let spec = ResourceSpec::from_preset("frontera-node", 128).unwrap();
        let pilot = acquire(PilotDescription::new(spec, 3600.0)).unwrap();
        assert_eq!(pilot.free_cores(), 4352);
    }

    #[test]
    fn acquire_advances_clock_by_startup() {
        let spec = ResourceSpec::from_preset("lassen-node", 1).unwrap();
        let pilot =
            acquire(PilotDescription::new(spec, 100.0).with_startup_latency(12.5)).unwrap();
        assert_eq!(pilot.clock, 12_500_000);
        assert_eq!(pilot.walltime_deadline, 100_000_000);
    }

    #[test]
    fn acquire_rejects_empty_and_bad_walltime() {
        let empty = ResourceSpec { name: "none".into(), nodes: vec![] };
        assert_eq!(
            acquire(PilotDescription::new(empty, 10.0)).unwrap_err(),
            ResourceError::EmptyResource
        );
        let spec = ResourceSpec::from_preset("summit-node", 1).unwrap();
        assert!(matches!(
            acquire(PilotDescription::new(spec, 0.0)),
            Err(ResourceError::InvalidPilot(_))
        ));
    }

    #[test]
    fn heterogeneous_rejected() {
        let mut spec = ResourceSpec::from_preset("summit-node", 2).unwrap();
        spec.nodes[1].gpus = 4;
        assert_eq!(spec.validate(), Err(ResourceError::Heterogeneous { node_id: 1 }));
    }

    #[test]
    fn usable_cannot_exceed_cores() {
        let node = NodeSpec::new(0, 4, 0).with_usable_cores(5);
        assert!(matches!(node.validate(), Err(ResourceError::InvalidNode { .. })));
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(
            NodeSpec::preset("bluegene"),
            Err(ResourceError::UnknownPreset("bluegene".into()))
        );
    }

    #[test]
    fn occupy_single_core() {
        let mut node = NodeState::new(NodeSpec::new(0, 42, 6));
        node.occupy(TaskId(1), &slots(0, &[0], &[])).unwrap();
        assert_eq!(node.core_holder(0), Some(TaskId(1)));
        assert_eq!(node.free_cores(), 41);
    }

    #[test]
    fn occupy_conflict_leaves_state_untouched() {
        let mut node = NodeState::new(NodeSpec::new(0, 42, 6));
        let cores: Vec<u32> = (0..41).collect();
        node.occupy(TaskId(1), &slots(0, &cores, &[])).unwrap();
        let before = node.clone();
        assert_eq!(node.lowest_free_cores(2), None);
        let err = node.occupy(TaskId(2), &slots(0, &[40, 41], &[])).unwrap_err();
        assert!(matches!(err, ResourceError::OccupancyConflict { id: 40, .. }));
        assert_eq!(node, before);
    }

    #[test]
    fn occupy_then_release_is_identity() {
        let initial = NodeState::new(NodeSpec::new(0, 8, 2));
        let mut node = initial.clone();
        let s = slots(0, &[1, 3], &[1]);
        node.occupy(TaskId(7), &s).unwrap();
        node.release(TaskId(7), &s).unwrap();
        assert_eq!(node, initial);
    }

    #[test]
    fn release_free_or_foreign_slot_fails() {
        let mut node = NodeState::new(NodeSpec::new(0, 8, 2));
        let err = node.release(TaskId(1), &slots(0, &[0], &[])).unwrap_err();
        assert!(matches!(err, ResourceError::Ownership { found: None, .. }));
        node.occupy(TaskId(1), &slots(0, &[0], &[0])).unwrap();
        let err = node.release(TaskId(2), &slots(0, &[0], &[])).unwrap_err();
        assert!(matches!(err, ResourceError::Ownership { found: Some(TaskId(1)), .. }));
    }

    #[test]
    fn unknown_and_duplicate_slots() {
        let mut node = NodeState::new(NodeSpec::new(0, 4, 1));
        assert!(matches!(
            node.occupy(TaskId(1), &slots(0, &[4], &[])),
            Err(ResourceError::UnknownSlot { kind: SlotKind::Core, id: 4, .. })
        ));
        assert!(matches!(
            node.occupy(TaskId(1), &slots(0, &[], &[1])),
            Err(ResourceError::UnknownSlot { kind: SlotKind::Gpu, id: 1, .. })
        ));
        assert!(matches!(
            node.occupy(TaskId(1), &slots(0, &[2, 2], &[])),
            Err(ResourceError::DuplicateSlot { .. })
        ));
    }

    #[test]
    fn unusable_cores_are_not_slots() {
        let mut node = NodeState::new(NodeSpec::preset("frontera-node").unwrap());
        assert_eq!(node.free_cores(), 34);
        assert!(node.occupy(TaskId(1), &slots(0, &[34], &[])).is_err());
    }

    #[test]
    fn multi_node_occupy_rolls_back() {
        let spec = ResourceSpec::homogeneous("pair", 2, NodeSpec::new(0, 2, 0));
        let mut pilot = acquire(PilotDescription::new(spec, 10.0)).unwrap();
        pilot
            .occupy(&Placement { task_id: TaskId(1), slots: vec![slots(1, &[0], &[])] })
            .unwrap();
        let before = pilot.nodes.clone();
        let bad = Placement {
            task_id: TaskId(2),
            slots: vec![slots(0, &[0, 1], &[]), slots(1, &[0], &[])],
        };
        assert!(pilot.occupy(&bad).is_err());
        assert_eq!(pilot.nodes, before);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Op {
        Occupy { task: u64, cores: u32, gpus: u32 },
        Release { pick: usize },
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..1000, 0u32..5, 0u32..3).prop_map(|(task, cores, gpus)| Op::Occupy {
                task,
                cores,
                gpus
            }),
            any::<usize>().prop_map(|pick| Op::Release { pick }),
        ]
    }

    proptest! {
        // Busy slots always equal the slot count of the live placements, and
        // occupancy never exceeds the node's capacity.
        #[test]
        fn busy_matches_live_placements(ops in prop::collection::vec(op(), 1..60)) {
            let spec = NodeSpec::new(0, 8, 3).with_usable_cores(6);
            let mut node = NodeState::new(spec);
            let mut live: Vec<(TaskId, NodeSlots)> = Vec::new();
            let mut next = 0u64;
            for op in ops {
                match op {
                    Op::Occupy { task, cores, gpus } => {
                        let id = TaskId(task * 1000 + next);
                        next += 1;
                        if let (Some(c), Some(g)) =
                            (node.lowest_free_cores(cores), node.lowest_free_gpus(gpus))
                        {
                            let s = NodeSlots { node_id: 0, cores: c, gpus: g };
                            node.occupy(id, &s).unwrap();
                            live.push((id, s));
                        }
                    }
                    Op::Release { pick } => {
                        if !live.is_empty() {
                            let (id, s) = live.swap_remove(pick % live.len());
                            node.release(id, &s).unwrap();
                        }
                    }
                }
                let expected: usize = live.iter().map(|(_, s)| s.cores.len() + s.gpus.len()).sum();
                prop_assert_eq!(node.busy_slots() as usize, expected);
                prop_assert!(node.free_cores() <= spec.usable_cpu_cores);
                prop_assert!(node.free_gpus() <= spec.gpus);
            }
            for (id, s) in live.drain(..) {
                node.release(id, &s).unwrap();
            }
            prop_assert_eq!(node, NodeState::new(spec));
        }
    }
}
