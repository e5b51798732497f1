// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hetpilot::log::{LogRow, PilotRow, TaskRow};
use hetpilot::scheduler::Colocation;
use hetpilot::{EventLog, NodeSlots, NodeSpec, NodeState, SchedulerConfig, TaskDescription, TaskId, TaskState};
use rand::Rng;

// ---------------------------------------------------------------------------
// Exhaustive placement oracle.

#[derive(Debug, Clone)]
pub struct ONode {
    pub core_free: Vec<bool>,
    pub gpu_free: Vec<bool>,
}

/// sorted (node, cores, gpus) per placed task
pub type Slots = Vec<(usize, Vec<u32>, Vec<u32>)>;

#[derive(Debug, Default, PartialEq)]
pub struct OracleOutcome {
    /// task -> sorted (node, cores, gpus)
    pub placed: BTreeMap<u64, Slots>,
    pub remaining: BTreeSet<u64>,
    pub rejected: BTreeSet<u64>,
}

fn combos(free: &[u32], k: usize) -> Vec<Vec<u32>> {
    fn rec(free: &[u32], k: usize, start: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..free.len() {
            cur.push(free[i]);
            rec(free, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= free.len() {
        rec(free, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Every way to split `ranks` over `n` nodes (counts per node).
fn splits(ranks: u32, n: usize) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![ranks]];
    }
    let mut out = Vec::new();
    for k in 0..=ranks {
        for mut rest in splits(ranks - k, n - 1) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

type Cand = (Vec<(usize, u32)>, Vec<(usize, u32)>);

/// Lexicographically smallest feasible placement: the (node, core) list
/// first, then the (node, gpu) list.
fn best_placement(
    nodes: &[ONode],
    allowed: &[bool],
    pc: u32,
    g: u32,
    ranks: u32,
    single_node: bool,
) -> Option<Slots> {
    let mut best: Option<Cand> = None;
    for split in splits(ranks, nodes.len()) {
        let used: Vec<usize> = (0..nodes.len()).filter(|&i| split[i] > 0).collect();
        if used.iter().any(|&i| !allowed[i]) || (single_node && used.len() > 1) {
            continue;
        }
        // Per-node options, then the cartesian product.
        let mut per_node: Vec<Vec<(Vec<u32>, Vec<u32>)>> = Vec::new();
        for &i in &used {
            let fc: Vec<u32> = (0..nodes[i].core_free.len() as u32).filter(|&c| nodes[i].core_free[c as usize]).collect();
            let fg: Vec<u32> = (0..nodes[i].gpu_free.len() as u32).filter(|&c| nodes[i].gpu_free[c as usize]).collect();
            let mut opts = Vec::new();
            for cs in combos(&fc, (split[i] * pc) as usize) {
                for gs in combos(&fg, (split[i] * g) as usize) {
                    opts.push((cs.clone(), gs));
                }
            }
            per_node.push(opts);
        }
        let mut idx = vec![0usize; used.len()];
        if per_node.iter().any(|o| o.is_empty()) {
            continue;
        }
        loop {
            let mut cores = Vec::new();
            let mut gpus = Vec::new();
            for (j, &i) in used.iter().enumerate() {
                let (cs, gs) = &per_node[j][idx[j]];
                cores.extend(cs.iter().map(|&c| (i, c)));
                gpus.extend(gs.iter().map(|&c| (i, c)));
            }
            let cand = (cores, gpus);
            if best.as_ref().is_none_or(|b| cand < *b) {
                best = Some(cand);
            }
            // Next index tuple.
            let mut j = 0;
            loop {
                if j == idx.len() {
                    break;
                }
                idx[j] += 1;
                if idx[j] < per_node[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == idx.len() {
                break;
            }
        }
    }
    let (cores, gpus) = best?;
    let mut by_node: BTreeMap<usize, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
    for (n, c) in cores {
        by_node.entry(n).or_default().0.push(c);
    }
    for (n, c) in gpus {
        by_node.entry(n).or_default().1.push(c);
    }
    Some(by_node.into_iter().map(|(n, (c, g))| (n, c, g)).collect())
}

/// One scheduling pass by brute force: priority order, every task tried,
/// lexicographically smallest feasible placement.
pub fn oracle_schedule(queue: &[TaskDescription], nodes: &[ONode], usable: u32, gpus: u32, cfg: &SchedulerConfig) -> OracleOutcome {
    let mut nodes = nodes.to_vec();
    let size = |t: &TaskDescription| -> u64 {
        let c = (t.ranks * t.cpu_cores_per_rank) as u64;
        let g = (t.ranks * t.gpus) as u64;
        if gpus == 0 {
            c
        } else {
            c * gpus as u64 + usable as u64 * g
        }
    };
    let mut order: Vec<&TaskDescription> = queue.iter().collect();
    if cfg.prioritize_large {
        order.sort_by_key(|t| std::cmp::Reverse(size(t)));
    }
    let empty: Vec<ONode> = nodes
        .iter()
        .map(|n| ONode { core_free: vec![true; n.core_free.len()], gpu_free: vec![true; n.gpu_free.len()] })
        .collect();
    let all = vec![true; nodes.len()];
    let mut tag_nodes: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut out = OracleOutcome::default();
    for t in order {
        let policy = t.tag.as_ref().and_then(|g| cfg.colocation.get(g).copied()).unwrap_or(Colocation::None);
        let pc = t.cpu_cores_per_rank.max(t.gpus);
        let single = t.ranks == 1 || policy == Colocation::SameNode;
        if (t.cpu_cores_per_rank == 0 && t.gpus == 0) || best_placement(&empty, &all, pc, t.gpus, t.ranks, single).is_none() {
            out.rejected.insert(t.task_id.0);
            continue;
        }
        let active = t.tag.as_ref().and_then(|g| tag_nodes.get(g)).cloned().unwrap_or_default();
        let allowed: Vec<bool> = (0..nodes.len())
            .map(|i| match policy {
                Colocation::SameNode if !active.is_empty() => active.contains(&i),
                Colocation::DifferentNode => !active.contains(&i),
                _ => true,
            })
            .collect();
        match best_placement(&nodes, &allowed, pc, t.gpus, t.ranks, single) {
            Some(p) => {
                for (n, cs, gs) in &p {
                    for &c in cs {
                        nodes[*n].core_free[c as usize] = false;
                    }
                    for &g in gs {
                        nodes[*n].gpu_free[g as usize] = false;
                    }
                    if let Some(tag) = &t.tag {
                        tag_nodes.entry(tag.clone()).or_default().insert(*n);
                    }
                }
                out.placed.insert(t.task_id.0, p);
            }
            None => {
                out.remaining.insert(t.task_id.0);
            }
        }
    }
    out
}

pub struct Instance {
    pub states: Vec<NodeState>,
    pub onodes: Vec<ONode>,
    pub usable: u32,
    pub gpus: u32,
    pub queue: Vec<TaskDescription>,
    pub cfg: SchedulerConfig,
}

/// A random small instance: up to 2 nodes x 8 cores x 2 GPUs, up to 6 tasks,
/// some slots already held by foreign tasks.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(1..=2usize);
    let cores = rng.random_range(1..=8u32);
    let gpus = rng.random_range(0..=2u32);
    let mut states: Vec<NodeState> = (0..n).map(|i| NodeState::new(NodeSpec::new(i, cores, gpus))).collect();
    let mut onodes = Vec::new();
    for (i, st) in states.iter_mut().enumerate() {
        let core_busy: Vec<u32> = (0..cores).filter(|_| rng.random_bool(0.3)).collect();
        let gpu_busy: Vec<u32> = (0..gpus).filter(|_| rng.random_bool(0.3)).collect();
        st.occupy(TaskId(10_000 + i as u64), &NodeSlots { node_id: i, cores: core_busy.clone(), gpus: gpu_busy.clone() })
            .unwrap();
        onodes.push(ONode {
            core_free: (0..cores).map(|c| !core_busy.contains(&c)).collect(),
            gpu_free: (0..gpus).map(|g| !gpu_busy.contains(&g)).collect(),
        });
    }
    let count = rng.random_range(0..=6u64);
    let queue = (0..count)
        .map(|id| {
            let mut c = rng.random_range(0..=4u32);
            let g = rng.random_range(0..=2u32);
            if c == 0 && g == 0 {
                c = 1;
            }
            let mut t = TaskDescription::gpu(id, g, c).with_ranks(rng.random_range(1..=3));
            match rng.random_range(0..4) {
                0 => t = t.with_tag("A"),
                1 => t = t.with_tag("B"),
                _ => {}
            }
            t
        })
        .collect();
    let cfg = SchedulerConfig { prioritize_large: rng.random_bool(0.7), ..Default::default() }
        .with_colocation("A", Colocation::SameNode)
        .with_colocation("B", Colocation::DifferentNode);
    Instance { states, onodes, usable: cores, gpus, queue, cfg }
}

// ---------------------------------------------------------------------------
// Random traces and per-tick metric oracles.

pub struct TraceTask {
    pub queued: u64,
    pub launch: u64,
    pub start: u64,
    pub end: u64,
    pub cores: u32,
    pub gpus: u32,
}

pub struct Trace {
    pub tasks: Vec<TraceTask>,
    pub cores: u32,
    pub gpus: u32,
    pub end: u64,
}

/// A random trace on a 1 ms grid (times in microseconds).
pub fn random_trace(rng: &mut impl Rng, n: usize) -> Trace {
    let ms = 1000u64;
    let cores = 8;
    let gpus = 2;
    let tasks: Vec<TraceTask> = (0..n)
        .map(|_| {
            let queued = rng.random_range(0..500u64) * ms;
            let launch = queued + rng.random_range(0..200u64) * ms;
            let start = launch + rng.random_range(0..50u64) * ms;
            let end = start + rng.random_range(0..300u64) * ms;
            TraceTask { queued, launch, start, end, cores: rng.random_range(1..=cores), gpus: rng.random_range(0..=gpus) }
        })
        .collect();
    let last = tasks.iter().map(|t| t.end).max().unwrap_or(0);
    Trace { tasks, cores, gpus, end: last + rng.random_range(0..100u64) * ms }
}

pub fn trace_log(tr: &Trace) -> EventLog {
    let mut log = EventLog::new();
    log.push(LogRow::Pilot(PilotRow {
        name: "trace".into(),
        nodes: 1,
        cores_per_node: tr.cores,
        gpus_per_node: tr.gpus,
        reserved_nodes: 0,
        startup_latency_us: 0,
        walltime_us: tr.end,
        backend: "direct".into(),
        flavor: "sim".into(),
    }));
    for (i, t) in tr.tasks.iter().enumerate() {
        let id = TaskId(i as u64);
        log.task(TaskRow::new(t.queued, id, TaskState::Queued));
        let mut r = TaskRow::new(t.launch, id, TaskState::Scheduled);
        r.placement = Some(vec![NodeSlots { node_id: 0, cores: (0..t.cores).collect(), gpus: (0..t.gpus).collect() }]);
        log.task(r);
        log.task(TaskRow::new(t.launch, id, TaskState::Launching));
        log.task(TaskRow::new(t.start, id, TaskState::Running));
        log.task(TaskRow::new(t.end, id, TaskState::Done));
    }
    log.push(LogRow::PilotEnd { time_us: tr.end });
    log
}

/// Busy core- and GPU-microseconds by walking every tick.
pub fn tick_busy(tr: &Trace, tick: u64) -> (u64, u64) {
    let (mut c, mut g) = (0, 0);
    let mut t = 0;
    while t < tr.end {
        for k in &tr.tasks {
            if k.start <= t && t < k.end {
                c += k.cores as u64 * tick;
                g += k.gpus as u64 * tick;
            }
        }
        t += tick;
    }
    (c, g)
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct TickOverhead {
    pub ttx: u64,
    pub busy: u64,
    pub startup: u64,
    pub teardown: u64,
    pub launch: u64,
    pub scheduling: u64,
    pub idle: u64,
}

/// Overhead by classifying every tick of TTX.
pub fn tick_overhead(tr: &Trace, tick: u64) -> TickOverhead {
    let mut o = TickOverhead::default();
    let Some(t0) = tr.tasks.iter().map(|k| k.queued).min() else { return o };
    let t1 = tr.tasks.iter().map(|k| k.end).max().unwrap();
    let first_launch = tr.tasks.iter().map(|k| k.launch).min().unwrap();
    let last_end = tr.tasks.iter().map(|k| k.end).max().unwrap();
    o.ttx = t1 - t0;
    let mut t = t0;
    while t < t1 {
        let running = tr.tasks.iter().any(|k| k.start <= t && t < k.end);
        let launching = tr.tasks.iter().any(|k| k.launch <= t && t < k.start);
        let waiting = tr.tasks.iter().any(|k| k.queued <= t && t < k.launch);
        let slot = if running {
            &mut o.busy
        } else if t < first_launch {
            &mut o.startup
        } else if t >= last_end {
            &mut o.teardown
        } else if launching {
            &mut o.launch
        } else if waiting {
            &mut o.scheduling
        } else {
            &mut o.idle
        };
        *slot += tick;
        t += tick;
    }
    o
}

// ---------------------------------------------------------------------------
// Other small oracles.

/// Longest-processing-time-first list scheduling makespan.
pub fn lpt(durations: &[f64], machines: usize) -> f64 {
    let mut d = durations.to_vec();
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut heap = std::collections::BinaryHeap::new();
    for _ in 0..machines {
        heap.push(std::cmp::Reverse(0u64));
    }
    for x in d {
        let std::cmp::Reverse(load) = heap.pop().unwrap();
        heap.push(std::cmp::Reverse(load + (x * 1e6).round() as u64));
    }
    heap.into_iter().map(|std::cmp::Reverse(l)| l).max().unwrap() as f64 / 1e6
}
