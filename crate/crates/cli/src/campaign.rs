// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Runs one campaign and writes its artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hetpilot::executor::{run_session, BagClient};
use hetpilot::overlay::OverlayRun;
use hetpilot::workflow::{run_pipelines, templates, PipelineSpec};
use hetpilot::workload::sample_durations;
use hetpilot::{EventLog, Flavor, TaskDescription};
use serde::{Deserialize, Serialize};

use crate::config::CampaignConfig;
use crate::report::{self, Reports};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub template: String,
    pub seed: u64,
    pub backend: String,
    pub flavor: String,
    pub tasks: u64,
    pub done: u64,
    pub failed: u64,
    pub lost: u64,
    pub completion_fraction: f64,
    pub completion_threshold: f64,
    pub passed: bool,
    pub end_s: f64,
    pub ttx_s: f64,
    pub overhead_fraction: f64,
    pub cpu_utilization: f64,
    pub gpu_utilization: f64,
    pub steady_rate_per_hour: f64,
    pub credit: f64,
}

pub struct RunOutput {
    pub summary: Summary,
    pub reports: Reports,
    pub dir: PathBuf,
}

struct Raw {
    log: EventLog,
    done: u64,
    failed: u64,
    lost: u64,
}

fn pipelines(cfg: &CampaignConfig) -> Vec<PipelineSpec> {
    let wf = &cfg.workflow;
    match wf.template.as_str() {
        "wf2-deepdrive" => (0..wf.pipelines).map(|_| templates::deepdrive(cfg.resource.nodes)).collect(),
        "wf3-esmacs" => (0..wf.pipelines).map(templates::esmacs).collect(),
        "wf4-ties" => (0..wf.pipelines).map(templates::ties).collect(),
        "hybrid-lb" => templates::hybrid_lb(wf.wf3, wf.wf4, cfg.resource.nodes),
        other => unreachable!("{other} is not a pipeline template"),
    }
}

fn simulate(cfg: &CampaignConfig) -> anyhow::Result<Raw> {
    let pilot = cfg.pilot_description()?;
    let backend = cfg.backend_config();
    match cfg.workflow.template.as_str() {
        "wf1-overlay" => {
            if backend.flavor == Flavor::Real {
                bail!("the wf1-overlay template runs on the simulated clock only");
            }
            let w = cfg.workload.resolve()?;
            let out = OverlayRun {
                resource: pilot.resource.clone(),
                master: cfg.overlay.clone(),
                executions: w.executions(),
                bundle_size: w.bundle_size,
                shape: w.shape,
                duration: w.model,
                startup_latency_s: cfg.pilot.startup_latency_s,
                walltime_s: cfg.pilot.walltime_s,
                seed: cfg.seed,
                worker_failures: vec![],
            }
            .run()?;
            Ok(Raw { log: out.log, done: out.completed, failed: out.failed, lost: out.lost - out.failed })
        }
        "bag" => {
            let w = cfg.workload.resolve()?;
            let durations = sample_durations(&w.model, w.item_count as usize, cfg.seed)?;
            let tasks = durations
                .into_iter()
                .enumerate()
                .map(|(i, d)| TaskDescription {
                    cpu_cores_per_rank: w.shape.cpu_cores,
                    gpus: w.shape.gpus,
                    ranks: w.shape.ranks,
                    ..TaskDescription::cpu(i as u64, 1)
                }
                .with_duration(d)
                .named(format!("task.{i:06}")))
                .collect();
            let out = run_session(&pilot, &cfg.scheduler, &backend, &mut BagClient::new(tasks))?;
            Ok(Raw { log: out.log, done: out.done, failed: out.failed, lost: out.lost })
        }
        _ => {
            let (out, _) = run_pipelines(pipelines(cfg), &cfg.workflow_config(), &pilot, &cfg.scheduler, &backend)?;
            Ok(Raw { log: out.log, done: out.done, failed: out.failed, lost: out.lost })
        }
    }
}

fn write_events(path: &Path, log: &EventLog) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.write_jsonl(BufWriter::new(f))?;
    Ok(())
}

/// Runs the campaign and writes all artifacts into `cfg.output.dir`.
pub fn run(cfg: &CampaignConfig) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    log::info!("running template {} with seed {}", cfg.workflow.template, cfg.seed);
    let raw = simulate(cfg)?;
    write_events(&dir.join(report::EVENTS), &raw.log)?;

    let credit = cfg.credit();
    let reports = report::compute(&raw.log, &cfg.output, credit)?;
    report::write(&dir, &reports, &cfg.output)?;

    let tasks = raw.done + raw.failed + raw.lost;
    let completion = if tasks == 0 { 1.0 } else { raw.done as f64 / tasks as f64 };
    let backend = cfg.backend_config();
    let summary = Summary {
        template: cfg.workflow.template.clone(),
        seed: cfg.seed,
        backend: backend.kind.as_str().into(),
        flavor: backend.flavor.as_str().into(),
        tasks,
        done: raw.done,
        failed: raw.failed,
        lost: raw.lost,
        completion_fraction: completion,
        completion_threshold: cfg.output.completion_threshold,
        passed: completion >= cfg.output.completion_threshold,
        end_s: raw.log.end_time().unwrap_or(0) as f64 / 1e6,
        ttx_s: reports.overhead.ttx_s(),
        overhead_fraction: reports.overhead.fraction(),
        cpu_utilization: reports.utilization.cpu,
        gpu_utilization: reports.utilization.gpu,
        steady_rate_per_hour: reports.rate.steady_state(cfg.output.rate_trim),
        credit,
    };
    let f = File::create(dir.join(report::SUMMARY))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
    Ok(RunOutput { summary, reports, dir })
}
