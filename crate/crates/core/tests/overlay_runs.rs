// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use hetpilot::metrics::rate;
use hetpilot::overlay::{lpt_makespan, spawn_overlay, MasterConfig, OverlayRun};
use hetpilot::workload::{make_preset, sample_durations, TaskShape};
use hetpilot::{DurationModel, NodeSpec, ResourceSpec};
use proptest::prelude::*;

fn cpu_shape() -> TaskShape {
    TaskShape { cpu_cores: 1, gpus: 0, ranks: 1 }
}

#[test]
fn masters_per_hundred_nodes() {
    let cfg = MasterConfig::default();
    for (nodes, masters, workers) in [(128, 2, 126), (1000, 10, 990), (2, 1, 1)] {
        let ov = spawn_overlay(nodes, 1, 10, &cfg).unwrap();
        assert_eq!((ov.masters.len(), ov.workers.len()), (masters, workers));
    }
}

#[test]
fn long_tail_makespan_near_lpt() {
    let p = make_preset("wf1-uc1").unwrap();
    let run = OverlayRun {
        resource: ResourceSpec::homogeneous("lt", 5, NodeSpec::new(0, 1, 0)),
        master: MasterConfig { bulk_size: 1, ..Default::default() },
        executions: 400,
        bundle_size: 1,
        shape: cpu_shape(),
        duration: p.model.clone(),
        startup_latency_s: 0.0,
        walltime_s: 1e7,
        seed: 21,
        worker_failures: vec![],
    };
    let out = run.run().unwrap();
    assert_eq!(out.completed, 400);
    let durations = sample_durations(&p.model, 400, 21).unwrap();
    let oracle = common::lpt(&durations, 4);
    assert!((lpt_makespan(&durations, 4) - oracle).abs() < 1e-3);
    let makespan = out.end as f64 / 1e6;
    assert!(makespan <= oracle * 1.10, "makespan {makespan} vs lpt {oracle}");
}

#[test]
fn gpu_docking_rate_follows_throughput_law() {
    let p = make_preset("wf1-uc3").unwrap();
    let run = OverlayRun {
        resource: ResourceSpec::from_preset("summit-node", 1011).unwrap(),
        master: MasterConfig::default(),
        executions: 120_000,
        bundle_size: p.bundle_size,
        shape: p.shape,
        duration: p.model.clone(),
        startup_latency_s: 0.0,
        walltime_s: 1e7,
        seed: 3,
        worker_failures: vec![],
    };
    let out = run.run().unwrap();
    assert_eq!(out.overlay.workers.len(), 1000);
    let measured = rate(&out.log, 60.0, p.bundle_size as f64).unwrap().steady_state(0.2);
    let law = 6000.0 * p.bundle_size as f64 / p.model.mean() * 3600.0;
    assert!((measured - law).abs() / law <= 0.10, "{measured} vs {law}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conservation_under_worker_loss(
        seed in any::<u64>(),
        executions in 1u64..400,
        bulk in 1usize..20,
        deaths in proptest::collection::vec((0usize..4, 0.0f64..30.0), 0..3),
    ) {
        let mut deaths = deaths;
        // Keep one worker per master alive: workers 0 and 2 serve master 0.
        deaths.retain(|(w, _)| *w % 2 == 0);
        deaths.dedup_by_key(|(w, _)| *w);
        deaths.truncate(1);
        let run = OverlayRun {
            resource: ResourceSpec::homogeneous("c", 6, NodeSpec::new(0, 4, 0)),
            master: MasterConfig { nodes_per_master: 3, bulk_size: bulk, ..Default::default() },
            executions,
            bundle_size: 1,
            shape: cpu_shape(),
            duration: DurationModel::lognormal(2.0, 0.8, 0.1, 20.0),
            startup_latency_s: 0.0,
            walltime_s: 1e6,
            seed,
            worker_failures: deaths,
        };
        let out = run.run().unwrap();
        prop_assert!(out.overlay.conserved());
        prop_assert_eq!(out.completed + out.lost, executions);
        prop_assert_eq!(out.protocol_errors, 0);
        out.log.check_no_oversubscription().unwrap();
    }
}
