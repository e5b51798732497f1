// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use hetpilot::executor::{run_session, BagClient};
use hetpilot::{BackendConfig, EventLog, NodeSpec, NodeState, PilotDescription, ResourceSpec, SchedulerConfig, TaskDescription};

/// Idle Summit-like nodes.
pub fn summit_nodes(n: usize) -> Vec<NodeState> {
    let spec = NodeSpec::preset("summit-node").expect("preset");
    (0..n).map(|i| NodeState::new(NodeSpec { node_id: i, ..spec })).collect()
}

/// Six GPU tasks and one 36-rank task per node, interleaved.
pub fn hybrid_queue(nodes: usize) -> Vec<TaskDescription> {
    let mut q = Vec::with_capacity(nodes * 7);
    let mut id = 0;
    for _ in 0..nodes {
        for _ in 0..6 {
            q.push(TaskDescription::gpu(id, 1, 1).with_duration(30.0));
            id += 1;
        }
        q.push(TaskDescription::cpu(id, 1).with_ranks(36).with_duration(108.0));
        id += 1;
    }
    q
}

/// Event log of a bag of `tasks` one-GPU tasks on `nodes` nodes.
pub fn bag_log(nodes: usize, tasks: u64) -> EventLog {
    let pilot = PilotDescription::new(ResourceSpec::from_preset("summit-node", nodes).expect("preset"), 1e7);
    let bag = (0..tasks).map(|i| TaskDescription::gpu(i, 1, 1).with_duration(30.0 + (i % 7) as f64)).collect();
    run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::direct(), &mut BagClient::new(bag))
        .expect("session")
        .log
}
