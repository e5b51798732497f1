// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Campaign configuration file (TOML).

use std::path::{Path, PathBuf};

use hetpilot::overlay::MasterConfig;
use hetpilot::workflow::{templates, AdaptiveLoopConfig, FailurePolicy, WorkflowConfig};
use hetpilot::workload::{make_preset, TaskShape, WorkloadPreset};
use hetpilot::{
    BackendConfig, DurationModel, NodeSpec, PartitionPlan, PilotDescription, ResourceSpec, SchedulerConfig,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Schema(u32),
    #[error("unknown workflow template {0:?} (known: {known})", known = templates::NAMES.join(", "))]
    Template(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(e: impl ToString) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Node type of the pilot: a named preset or an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usable_cores: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpus: Option<u32>,
}

impl ResourceSection {
    pub fn spec(&self) -> Result<ResourceSpec, ConfigError> {
        let template = match (&self.preset, self.cores) {
            (Some(p), None) => NodeSpec::preset(p).map_err(invalid)?,
            (None, Some(c)) => {
                let mut n = NodeSpec::new(0, c, self.gpus.unwrap_or(0));
                if let Some(u) = self.usable_cores {
                    n = n.with_usable_cores(u);
                }
                n
            }
            (Some(_), Some(_)) => return Err(invalid("resource: give either preset or cores, not both")),
            (None, None) => return Err(invalid("resource: give a preset or cores")),
        };
        let name = self.preset.clone().unwrap_or_else(|| "custom".into());
        let spec = ResourceSpec::homogeneous(name, self.nodes, template);
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    pub walltime_s: f64,
    pub startup_latency_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partitions: Option<PartitionPlan>,
}

impl Default for PilotSection {
    fn default() -> Self {
        PilotSection { walltime_s: 86_400.0, startup_latency_s: 0.0, partitions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSection {
    /// One of `templates::NAMES`.
    pub template: String,
    /// Pipeline count for the wf3-esmacs and wf4-ties templates.
    #[serde(default = "one")]
    pub pipelines: usize,
    /// Pipeline counts of the hybrid-lb template.
    #[serde(default)]
    pub wf3: usize,
    #[serde(default)]
    pub wf4: usize,
    #[serde(default = "one")]
    pub iterations: usize,
    #[serde(default)]
    pub outlier_probability: f64,
    #[serde(default)]
    pub comm_latency_s: f64,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
}

fn one() -> usize {
    1
}

/// Task population for the bag and overlay templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Work items; overrides the preset's count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle_size: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<TaskShape>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<DurationModel>,
    /// Multiplies every duration.
    pub duration_scale: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection { preset: None, items: None, bundle_size: None, shape: None, duration: None, duration_scale: 1.0 }
    }
}

impl WorkloadSection {
    /// The effective workload after applying overrides to the preset.
    pub fn resolve(&self) -> Result<WorkloadPreset, ConfigError> {
        let mut p = match &self.preset {
            Some(name) => make_preset(name).map_err(invalid)?,
            None => WorkloadPreset {
                name: "custom".into(),
                item_count: 1,
                model: DurationModel::constant(1.0),
                bundle_size: 1,
                shape: TaskShape { cpu_cores: 1, gpus: 0, ranks: 1 },
            },
        };
        if let Some(n) = self.items {
            p.item_count = n;
        }
        if let Some(b) = self.bundle_size {
            p.bundle_size = b;
        }
        if let Some(s) = self.shape {
            p.shape = s;
        }
        if let Some(d) = &self.duration {
            p.model = d.clone();
        }
        if !(self.duration_scale.is_finite() && self.duration_scale > 0.0) {
            return Err(invalid(format!("workload.duration_scale must be > 0, got {}", self.duration_scale)));
        }
        p.model = p.model.scaled(self.duration_scale);
        p.validate().map_err(invalid)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Utilization timeline bucket.
    pub bucket_s: f64,
    pub rate_window_s: f64,
    /// Fraction of rate points dropped at each end for the steady-state rate.
    pub rate_trim: f64,
    /// Minimum fraction of tasks done for a zero exit status.
    pub completion_threshold: f64,
    /// Also write SVG plots.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            bucket_s: 10.0,
            rate_window_s: 60.0,
            rate_trim: 0.2,
            completion_threshold: 0.95,
            plot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub resource: ResourceSection,
    #[serde(default)]
    pub pilot: PilotSection,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    pub workflow: WorkflowSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub overlay: MasterConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: CampaignConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        if !templates::NAMES.contains(&self.workflow.template.as_str()) {
            return Err(ConfigError::Template(self.workflow.template.clone()));
        }
        let pilot = self.pilot_description()?;
        self.backend.validate(&pilot, &self.scheduler).map_err(invalid)?;
        self.workflow_config().validate().map_err(invalid)?;
        self.workload.resolve()?;
        self.overlay.validate().map_err(invalid)?;
        let o = &self.output;
        if !(o.bucket_s > 0.0 && o.rate_window_s > 0.0) {
            return Err(invalid("output.bucket_s and output.rate_window_s must be > 0"));
        }
        if !(0.0..0.5).contains(&o.rate_trim) {
            return Err(invalid("output.rate_trim must be in [0, 0.5)"));
        }
        if !(0.0..=1.0).contains(&o.completion_threshold) {
            return Err(invalid("output.completion_threshold must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn pilot_description(&self) -> Result<PilotDescription, ConfigError> {
        let mut d = PilotDescription::new(self.resource.spec()?, self.pilot.walltime_s)
            .with_startup_latency(self.pilot.startup_latency_s);
        d.partition_plan = self.pilot.partitions.clone();
        d.validate().map_err(invalid)?;
        Ok(d)
    }

    pub fn workflow_config(&self) -> WorkflowConfig {
        WorkflowConfig {
            comm_latency_s: self.workflow.comm_latency_s,
            failure_policy: self.workflow.failure_policy,
            adaptive: AdaptiveLoopConfig {
                max_iterations: self.workflow.iterations,
                outlier_probability: self.workflow.outlier_probability,
            },
            seed: self.seed,
        }
    }

    /// Backend settings with the campaign seed applied.
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig { seed: self.seed, ..self.backend.clone() }
    }

    /// Items credited per completed execution in rate reports.
    pub fn credit(&self) -> f64 {
        if self.workflow.template == "wf1-overlay" {
            self.workload.resolve().map(|p| p.bundle_size as f64).unwrap_or(1.0)
        } else {
            1.0
        }
    }
}
