// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Utilization, completion rate and overhead, computed from an event log
//! alone.
//!
//! * Utilization: slot-time held by executing tasks over slot-time
//!   allocated, the pilot span times its task capacity.
//! * Rate: completions per hour over tumbling windows, credited per bundle.
//! * Overhead: the part of TTX (first queued to last terminal) during which
//!   no task executes, attributed to startup, teardown, launch delay,
//!   scheduling or idle gaps, in that order of precedence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{EventLog, LogError, TaskRecord, TaskState};
use crate::resource::TaskId;
use crate::time::{self, Micros};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{task}: malformed intervals: {reason}")]
    Malformed { task: TaskId, reason: String },
    #[error("window and bucket sizes must be > 0")]
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub t_s: f64,
    pub cpu: f64,
    pub gpu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub span_us: Micros,
    pub busy_core_us: u64,
    pub busy_gpu_us: u64,
    pub allocated_core_us: u64,
    pub allocated_gpu_us: u64,
    pub cpu: f64,
    pub gpu: f64,
    pub combined: f64,
    pub bucket_s: f64,
    pub timeline: Vec<TimelinePoint>,
}

impl UtilizationReport {
    pub fn busy_core_seconds(&self) -> f64 {
        self.busy_core_us as f64 / 1e6
    }

    pub fn busy_gpu_seconds(&self) -> f64 {
        self.busy_gpu_us as f64 / 1e6
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn checked_records(log: &EventLog) -> Result<Vec<TaskRecord>, MetricsError> {
    let recs: Vec<TaskRecord> = log.records().into_values().collect();
    for r in &recs {
        let bad = |reason: &str| Err(MetricsError::Malformed { task: r.task_id, reason: reason.into() });
        if let Some((s, e)) = r.exec_interval() {
            if e < s {
                return bad("execution ends before it starts");
            }
        }
        let chain = [r.queued, r.scheduled, r.launch_start, r.exec_start];
        let mut last = 0;
        for t in chain.into_iter().flatten() {
            if t < last {
                return bad("lifecycle timestamps go backwards");
            }
            last = t;
        }
    }
    Ok(recs)
}

/// Pilot span: zero to the teardown row, or to the last row if missing.
fn span(log: &EventLog) -> Micros {
    log.end_time()
        .unwrap_or_else(|| log.task_rows().map(|r| r.time_us.max(r.exec_end_us.unwrap_or(0))).max().unwrap_or(0))
}

pub fn utilization(log: &EventLog, bucket_s: f64) -> Result<UtilizationReport, MetricsError> {
    if bucket_s.is_nan() || bucket_s <= 0.0 {
        return Err(MetricsError::Window);
    }
    let pilot = log.pilot().ok_or(LogError::MissingPilot)?;
    let recs = checked_records(log)?;
    let span_us = span(log);
    let (cap_c, cap_g) = (pilot.core_capacity(), pilot.gpu_capacity());
    let bucket = time::from_secs(bucket_s).max(1);
    let nb = span_us.div_ceil(bucket) as usize;
    let mut tl_c = vec![0u64; nb];
    let mut tl_g = vec![0u64; nb];
    let (mut busy_c, mut busy_g) = (0u64, 0u64);
    for r in &recs {
        let Some((s, e)) = r.exec_interval() else { continue };
        let (c, g) = (r.cores_held(), r.gpus_held());
        busy_c += (e - s) * c;
        busy_g += (e - s) * g;
        let mut t = s;
        while t < e {
            let b = (t / bucket) as usize;
            let next = ((b as u64 + 1) * bucket).min(e);
            if b < nb {
                tl_c[b] += (next - t) * c;
                tl_g[b] += (next - t) * g;
            }
            t = next;
        }
    }
    let timeline = (0..nb)
        .map(|b| {
            let width = bucket.min(span_us - b as u64 * bucket);
            TimelinePoint {
                t_s: time::to_secs(b as u64 * bucket),
                cpu: ratio(tl_c[b], width * cap_c),
                gpu: ratio(tl_g[b], width * cap_g),
            }
        })
        .collect();
    let (alloc_c, alloc_g) = (span_us * cap_c, span_us * cap_g);
    Ok(UtilizationReport {
        span_us,
        busy_core_us: busy_c,
        busy_gpu_us: busy_g,
        allocated_core_us: alloc_c,
        allocated_gpu_us: alloc_g,
        cpu: ratio(busy_c, alloc_c),
        gpu: ratio(busy_g, alloc_g),
        combined: ratio(busy_c + busy_g, alloc_c + alloc_g),
        bucket_s,
        timeline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t_s: f64,
    pub per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub window_s: f64,
    pub credit: f64,
    pub points: Vec<RatePoint>,
}

impl RateSeries {
    /// Mean rate over the points left after dropping `trim` of them at each end.
    pub fn steady_state(&self, trim: f64) -> f64 {
        let n = self.points.len();
        let k = ((n as f64) * trim).floor() as usize;
        let mid = &self.points[k.min(n)..n.saturating_sub(k).max(k.min(n))];
        if mid.is_empty() {
            return 0.0;
        }
        mid.iter().map(|p| p.per_hour).sum::<f64>() / mid.len() as f64
    }

    /// Completions credited by the series, times credit.
    pub fn integrated(&self) -> f64 {
        self.points.iter().map(|p| p.per_hour * self.window_s / 3600.0).sum()
    }
}

/// Completion times: end of execution of every task that finished `done`.
pub fn completion_times(log: &EventLog) -> Vec<Micros> {
    let mut t: Vec<Micros> = log
        .records()
        .values()
        .filter(|r| r.state == Some(TaskState::Done))
        .map(|r| r.exec_end.or(r.done).expect("done task has a time"))
        .collect();
    t.sort_unstable();
    t
}

/// Point at `t` counts completions in `(t - window, t]`; points run from 0
/// to the first multiple of the window at or after the last completion.
pub fn rate(log: &EventLog, window_s: f64, credit: f64) -> Result<RateSeries, MetricsError> {
    if window_s.is_nan() || window_s <= 0.0 {
        return Err(MetricsError::Window);
    }
    let w = time::from_secs(window_s).max(1);
    let times = completion_times(log);
    let last = times.last().copied().unwrap_or(0);
    let n = last.div_ceil(w) as usize + 1;
    let mut counts = vec![0u64; n];
    for t in times {
        counts[t.div_ceil(w) as usize] += 1;
    }
    let scale = credit * 3600.0 / window_s;
    let points = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| RatePoint { t_s: time::to_secs(k as u64 * w), per_hour: c as f64 * scale })
        .collect();
    Ok(RateSeries { window_s, credit, points })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadParts {
    pub startup_us: Micros,
    pub scheduling_us: Micros,
    pub launch_delay_us: Micros,
    pub teardown_us: Micros,
    pub idle_gaps_us: Micros,
}

impl OverheadParts {
    pub fn total(&self) -> Micros {
        self.startup_us + self.scheduling_us + self.launch_delay_us + self.teardown_us + self.idle_gaps_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub ttx_start_us: Micros,
    pub ttx_us: Micros,
    pub busy_union_us: Micros,
    pub overhead_us: Micros,
    pub parts: OverheadParts,
}

impl OverheadReport {
    pub fn fraction(&self) -> f64 {
        ratio(self.overhead_us, self.ttx_us)
    }

    pub fn ttx_s(&self) -> f64 {
        time::to_secs(self.ttx_us)
    }

    pub fn overhead_s(&self) -> f64 {
        time::to_secs(self.overhead_us)
    }
}

/// Length of the union of half-open intervals.
pub fn interval_union(mut iv: Vec<(Micros, Micros)>) -> Micros {
    iv.retain(|(a, b)| b > a);
    iv.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(Micros, Micros)> = None;
    for (a, b) in iv {
        match cur {
            Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    total + cur.map_or(0, |(s, e)| e - s)
}

pub fn overhead(log: &EventLog) -> Result<OverheadReport, MetricsError> {
    let recs = checked_records(log)?;
    let Some(t0) = recs.iter().filter_map(|r| r.queued).min() else {
        return Ok(OverheadReport { ttx_start_us: 0, ttx_us: 0, busy_union_us: 0, overhead_us: 0, parts: OverheadParts::default() });
    };
    let t1 = recs.iter().filter_map(|r| r.done.max(r.exec_end)).max().unwrap_or(t0).max(t0);
    let first_launch = recs.iter().filter_map(|r| r.launch_start.or(r.exec_start)).min().unwrap_or(t1);
    let last_exec = recs.iter().filter_map(|r| r.exec_end).max().unwrap_or(t0);

    // Sweep events: (time, running delta, launching delta, waiting delta).
    let mut ev: Vec<(Micros, i64, i64, i64)> = Vec::new();
    let mut running = Vec::new();
    for r in &recs {
        let end = r.done.unwrap_or(t1);
        if let Some((s, e)) = r.exec_interval() {
            running.push((s, e));
            ev.push((s, 1, 0, 0));
            ev.push((e, -1, 0, 0));
        }
        if let Some(ls) = r.launch_start {
            let le = r.exec_start.unwrap_or(end);
            ev.push((ls, 0, 1, 0));
            ev.push((le, 0, -1, 0));
        }
        if let Some(q) = r.queued {
            let qe = r.launch_start.or(r.exec_start).unwrap_or(end);
            ev.push((q, 0, 0, 1));
            ev.push((qe, 0, 0, -1));
        }
    }
    ev.sort_unstable();
    let mut parts = OverheadParts::default();
    let (mut run, mut launch, mut wait) = (0i64, 0i64, 0i64);
    let mut i = 0;
    let mut prev = t0;
    let mut busy = 0;
    while prev < t1 {
        while i < ev.len() && ev[i].0 <= prev {
            run += ev[i].1;
            launch += ev[i].2;
            wait += ev[i].3;
            i += 1;
        }
        let next = if i < ev.len() { ev[i].0.min(t1) } else { t1 };
        let mut a = prev;
        // Split at phase boundaries so each piece has one phase.
        for cut in [first_launch, last_exec, next] {
            if cut <= a || cut > next {
                continue;
            }
            let len = cut - a;
            if run > 0 {
                busy += len;
            } else if a < first_launch {
                parts.startup_us += len;
            } else if a >= last_exec {
                parts.teardown_us += len;
            } else if launch > 0 {
                parts.launch_delay_us += len;
            } else if wait > 0 {
                parts.scheduling_us += len;
            } else {
                parts.idle_gaps_us += len;
            }
            a = cut;
        }
        prev = next;
    }
    let ttx = t1 - t0;
    debug_assert_eq!(busy, interval_union(running.iter().map(|&(s, e)| (s.max(t0), e.min(t1))).collect()));
    Ok(OverheadReport { ttx_start_us: t0, ttx_us: ttx, busy_union_us: busy, overhead_us: ttx - busy, parts })
}
