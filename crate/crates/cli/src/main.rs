// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use hetpilot::{BackendKind, Flavor};
use hetpilot_cli::config::OutputSection;
use hetpilot_cli::{report, CampaignConfig};

#[derive(Parser)]
#[command(name = "hetpilot", version, about = "Run pilot-based task campaigns and report on them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Direct,
    Partitioned,
    Bulk,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Sim,
    Real,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, value_enum)]
        flavor: Option<FlavorArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute reports from an existing event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Campaign file supplying the output settings and rate credit.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Run { config, seed, backend, flavor, out } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = backend {
                cfg.backend.kind = match b {
                    BackendArg::Direct => BackendKind::Direct,
                    BackendArg::Partitioned => BackendKind::Partitioned,
                    BackendArg::Bulk => BackendKind::Bulk,
                };
            }
            if let Some(f) = flavor {
                cfg.backend.flavor = match f {
                    FlavorArg::Sim => Flavor::Sim,
                    FlavorArg::Real => Flavor::Real,
                };
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            let res = hetpilot_cli::run(&cfg).with_context(|| format!("running {}", config.display()))?;
            let s = &res.summary;
            println!(
                "{}: {}/{} done, ttx {:.1} s, overhead {:.1}%, cpu {:.1}%, gpu {:.1}% -> {}",
                s.template,
                s.done,
                s.tasks,
                s.ttx_s,
                s.overhead_fraction * 100.0,
                s.cpu_utilization * 100.0,
                s.gpu_utilization * 100.0,
                res.dir.display()
            );
            if s.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "completion {:.4} below threshold {:.4}",
                    s.completion_fraction, s.completion_threshold
                );
                Ok(ExitCode::from(2))
            }
        }
        Command::Report { log, config, out } => {
            let (output, credit) = match config {
                Some(p) => {
                    let cfg = CampaignConfig::load(&p)?;
                    let credit = cfg.credit();
                    (cfg.output, credit)
                }
                None => (OutputSection::default(), 1.0),
            };
            let r = report::report(&log, &out, &output, credit)?;
            println!(
                "ttx {:.1} s, overhead {:.1}%, cpu {:.1}%, gpu {:.1}% -> {}",
                r.overhead.ttx_s(),
                r.overhead.fraction() * 100.0,
                r.utilization.cpu * 100.0,
                r.utilization.gpu * 100.0,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
