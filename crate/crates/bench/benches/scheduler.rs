// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use hetpilot::{Scheduler, SchedulerConfig};
use hetpilot_bench::{hybrid_queue, summit_nodes};

fn continuous(c: &mut Criterion) {
    let mut group = c.benchmark_group("continuous");
    for nodes in [32usize, 128, 512] {
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, &n| {
            b.iter_batched(
                || (summit_nodes(n), hybrid_queue(n)),
                |(mut state, queue)| Scheduler::new(SchedulerConfig::default()).schedule(queue, &mut state),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn noop(c: &mut Criterion) {
    let queue = hybrid_queue(1000);
    c.bench_function("noop_7000", |b| {
        b.iter_batched(
            || queue.clone(),
            |q| Scheduler::new(SchedulerConfig::default()).schedule_noop(q),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, continuous, noop);
criterion_main!(benches);
