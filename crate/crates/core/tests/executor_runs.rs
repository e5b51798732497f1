// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

use hetpilot::executor::{run_session, start_partitions, BagClient};
use hetpilot::metrics::overhead;
use hetpilot::{
    BackendConfig, Flavor, NodeSpec, PartitionPlan, PilotDescription, ResourceSpec, SchedulerConfig, StabilityLimits,
    TaskDescription, TaskState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gpu_bag(n: u64, secs: f64) -> BagClient {
    BagClient::new((0..n).map(|i| TaskDescription::gpu(i, 1, 1).with_duration(secs)).collect())
}

fn summit(nodes: usize) -> ResourceSpec {
    ResourceSpec::from_preset("summit-node", nodes).unwrap()
}

#[test]
fn partition_startup_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let limits = StabilityLimits { inject_failures: false, ..Default::default() };
    for (count, want) in [(32, 336.0), (64, 672.0)] {
        let (_, elapsed) = start_partitions(&PartitionPlan::new(count, 1), &limits, 0, &mut rng);
        assert_eq!(elapsed as f64 / 1e6, want);
    }
    let plan = PartitionPlan { per_partition_start_cost_s: 0.0, post_start_sleep_s: 0.0, ..PartitionPlan::new(1, 1) };
    assert_eq!(start_partitions(&plan, &limits, 0, &mut rng).1, 0);
}

const FAILURE_SEED: u64 = 5;

fn failure_run(seed: u64) -> hetpilot::SessionOutcome {
    let pilot = PilotDescription::new(summit(2000), 1e6).with_partitions(PartitionPlan::new(64, 31));
    run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::partitioned().with_seed(seed), &mut gpu_bag(12000, 30.0))
        .unwrap()
}

#[test]
fn unstable_partitions_lose_some_tasks() {
    let out = failure_run(FAILURE_SEED);
    assert_eq!(out.total(), 12000);
    assert!(out.done < 12000, "seed {FAILURE_SEED} should trigger a fault");
    assert!(out.completion_fraction() >= 0.95, "done {}", out.done);
    out.log.validate().unwrap();
    out.log.check_no_oversubscription().unwrap();
    let recs = out.log.records();
    assert!(recs.values().all(|r| r.state.is_some_and(TaskState::is_terminal)));
}

#[test]
fn failure_injection_range_over_seeds() {
    let runs: Vec<_> = (0..16).map(failure_run).collect();
    let mean = runs.iter().map(|o| o.completion_fraction()).sum::<f64>() / runs.len() as f64;
    assert!((0.95..1.0).contains(&mean), "mean completion {mean}");
    assert!(runs.iter().any(|o| o.done < 12000));
}

#[test]
fn stable_partitions_never_fail() {
    let pilot = PilotDescription::new(summit(32), 1e6).with_partitions(PartitionPlan::new(32, 1));
    for seed in 0..4 {
        let out = run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::partitioned().with_seed(seed), &mut gpu_bag(400, 5.0))
            .unwrap();
        assert_eq!(out.done, 400);
    }
}

fn bulk_span(n: u64, rate: f64) -> f64 {
    let pilot = PilotDescription::new(ResourceSpec::from_preset("lassen-node", 256).unwrap(), 1e6);
    let out = run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::bulk(rate), &mut gpu_bag(n, 10.0)).unwrap();
    assert_eq!(out.done, n);
    let launches: Vec<u64> = out.log.records().values().filter_map(|r| r.launch_start).collect();
    (launches.iter().max().unwrap() - launches.iter().min().unwrap()) as f64 / 1e6
}

#[test]
fn bulk_admission_spans() {
    let s = bulk_span(1000, 10.0);
    assert!((s - 100.0).abs() <= 5.0, "{s}");
    let s = bulk_span(512, 14.21);
    assert!((s - 512.0 / 14.21).abs() <= 0.05 * 36.0, "{s}");
    assert_eq!(bulk_span(500, f64::INFINITY), 0.0);
}

#[test]
fn exec_time_is_exact_in_sim() {
    let pilot = PilotDescription::new(summit(1), 1e6);
    for secs in [36.2, 0.0] {
        let out = run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::direct(), &mut gpu_bag(1, secs)).unwrap();
        let r = out.log.records().into_values().next().unwrap();
        assert_eq!(r.exec_end.unwrap() - r.exec_start.unwrap(), hetpilot::time::from_secs(secs));
        assert_eq!(r.exec_start, r.launch_start);
    }
}

#[test]
fn launch_delay_through_one_lane() {
    let pilot = PilotDescription::new(summit(32), 1e6).with_partitions(PartitionPlan::new(32, 1));
    let tasks = (0..6000).map(|i| TaskDescription::cpu(i, 1).with_duration(0.0)).collect();
    let out = run_session(&pilot, &SchedulerConfig::default(), &BackendConfig::partitioned(), &mut BagClient::new(tasks)).unwrap();
    let total: u64 = out
        .log
        .records()
        .values()
        .map(|r| r.exec_start.unwrap() - r.launch_start.unwrap())
        .sum();
    assert_eq!(total, 6000 * 100_000);
    assert_eq!(overhead(&out.log).unwrap().parts.launch_delay_us, 600_000_000);
}

#[test]
fn real_pipeline_arithmetic() {
    let pilot = PilotDescription::new(ResourceSpec::homogeneous("local", 1, NodeSpec::new(0, 8, 0)), 120.0);
    let tasks = (0..100).map(|i| TaskDescription::cpu(i, 1).with_duration(0.2)).collect();
    let backend = BackendConfig::direct().with_flavor(Flavor::Real);
    let out = run_session(&pilot, &SchedulerConfig::default(), &backend, &mut BagClient::new(tasks)).unwrap();
    assert_eq!(out.done, 100);
    let wall = out.end as f64 / 1e6;
    let ideal = (100f64 / 8.0).ceil() * 0.2;
    assert!(wall >= ideal - 0.05 && wall <= ideal + 1.0, "wall {wall} vs {ideal}");
    out.log.check_no_oversubscription().unwrap();
}
