// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Report artifacts computed from an event log.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use hetpilot::metrics::{overhead, rate, utilization};
use hetpilot::{EventLog, OverheadReport, RateSeries, UtilizationReport};
use serde::Serialize;

use crate::config::OutputSection;
use crate::plot;

pub const EVENTS: &str = "events.jsonl";
pub const UTILIZATION: &str = "utilization.json";
pub const OVERHEAD: &str = "overhead.json";
pub const RATE: &str = "rate.json";
pub const TIMELINE: &str = "timeline.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone)]
pub struct Reports {
    pub utilization: UtilizationReport,
    pub overhead: OverheadReport,
    pub rate: RateSeries,
}

pub fn compute(log: &EventLog, out: &OutputSection, credit: f64) -> anyhow::Result<Reports> {
    Ok(Reports {
        utilization: utilization(log, out.bucket_s)?,
        overhead: overhead(log)?,
        rate: rate(log, out.rate_window_s, credit)?,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

pub fn write(dir: &Path, r: &Reports, out: &OutputSection) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join(UTILIZATION), &r.utilization)?;
    write_json(&dir.join(OVERHEAD), &r.overhead)?;
    write_json(&dir.join(RATE), &r.rate)?;
    let mut w = csv::Writer::from_path(dir.join(TIMELINE))?;
    for p in &r.utilization.timeline {
        w.serialize(p)?;
    }
    w.flush()?;
    if out.plot {
        plot::write_all(dir, r)?;
    }
    Ok(())
}

pub fn read_log(path: &Path) -> anyhow::Result<EventLog> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let log = EventLog::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    log.validate()?;
    Ok(log)
}

/// Recomputes and writes the reports of an existing log.
pub fn report(log_path: &Path, dir: &Path, out: &OutputSection, credit: f64) -> anyhow::Result<Reports> {
    let log = read_log(log_path)?;
    let r = compute(&log, out, credit)?;
    write(dir, &r, out)?;
    Ok(r)
}
