// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Task-duration models and named workload presets.
//!
//! Docking-style workloads use a lognormal clipped to `[min, max]`. Given a
//! target mean and a shape `sigma`, the log-location `mu` is found by
//! bisection so that the mean of the truncated distribution hits the target.
//! When a preset only knows (min, max, mean) and the number of draws, `sigma`
//! comes from the expected maximum of that many draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid duration model: {0}")]
    InvalidModel(String),
    #[error("unknown workload preset `{0}` (known: {known})", known = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error("sample count must be at least 1")]
    EmptySample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DurationModel {
    Constant { seconds: f64 },
    LognormalTruncated { mean: f64, sigma: f64, min: f64, max: f64 },
    EmpiricalTable { samples: Vec<f64> },
}

impl DurationModel {
    pub fn constant(seconds: f64) -> Self {
        DurationModel::Constant { seconds }
    }

    pub fn lognormal(mean: f64, sigma: f64, min: f64, max: f64) -> Self {
        DurationModel::LognormalTruncated { mean, sigma, min, max }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidModel(m));
        match self {
            DurationModel::Constant { seconds } => {
                if !(seconds.is_finite() && *seconds >= 0.0) {
                    return bad(format!("constant duration must be >= 0, got {seconds}"));
                }
            }
            DurationModel::LognormalTruncated { mean, sigma, min, max } => {
                if ![*mean, *sigma, *min, *max].iter().all(|v| v.is_finite()) {
                    return bad("lognormal parameters must be finite".into());
                }
                if *min <= 0.0 || *sigma <= 0.0 {
                    return bad(format!("need min > 0 and sigma > 0, got min {min}, sigma {sigma}"));
                }
                if !(min < mean && mean < max) {
                    return bad(format!("need min < mean < max, got {min} / {mean} / {max}"));
                }
            }
            DurationModel::EmpiricalTable { samples } => {
                if samples.is_empty() {
                    return bad("empirical table is empty".into());
                }
                if let Some(v) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return bad(format!("empirical sample {v} is not a non-negative duration"));
                }
            }
        }
        Ok(())
    }

    /// Nominal mean in seconds.
    pub fn mean(&self) -> f64 {
        match self {
            DurationModel::Constant { seconds } => *seconds,
            DurationModel::LognormalTruncated { mean, .. } => *mean,
            DurationModel::EmpiricalTable { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// The same model with every duration multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            DurationModel::Constant { seconds } => DurationModel::constant(seconds * factor),
            DurationModel::LognormalTruncated { mean, sigma, min, max } => {
                DurationModel::lognormal(mean * factor, *sigma, min * factor, max * factor)
            }
            DurationModel::EmpiricalTable { samples } => DurationModel::EmpiricalTable {
                samples: samples.iter().map(|s| s * factor).collect(),
            },
        }
    }

    pub fn sampler(&self, seed: u64) -> Result<DurationSampler, WorkloadError> {
        self.validate()?;
        let kind = match self {
            DurationModel::Constant { seconds } => SamplerKind::Constant(*seconds),
            DurationModel::LognormalTruncated { mean, sigma, min, max } => {
                let mu = solve_mu(*mean, *sigma, *min, *max)?;
                let n = std_normal();
                let lo = n.cdf((min.ln() - mu) / sigma);
                let hi = n.cdf((max.ln() - mu) / sigma);
                SamplerKind::Lognormal { mu, sigma: *sigma, lo, hi, min: *min, max: *max }
            }
            DurationModel::EmpiricalTable { samples } => SamplerKind::Table(samples.clone()),
        };
        Ok(DurationSampler { kind, rng: ChaCha8Rng::seed_from_u64(seed), normal: std_normal() })
    }
}

/// Draws `n` durations from `model`; the same seed gives the same sequence.
pub fn sample_durations(model: &DurationModel, n: usize, seed: u64) -> Result<Vec<f64>, WorkloadError> {
    if n == 0 {
        return Err(WorkloadError::EmptySample);
    }
    let mut s = model.sampler(seed)?;
    Ok((0..n).map(|_| s.sample()).collect())
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Constant(f64),
    Lognormal { mu: f64, sigma: f64, lo: f64, hi: f64, min: f64, max: f64 },
    Table(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct DurationSampler {
    kind: SamplerKind,
    rng: ChaCha8Rng,
    normal: Normal,
}

impl DurationSampler {
    pub fn sample(&mut self) -> f64 {
        match &self.kind {
            SamplerKind::Constant(s) => *s,
            SamplerKind::Lognormal { mu, sigma, lo, hi, min, max } => {
                let u: f64 = self.rng.random();
                let p = lo + u * (hi - lo);
                // Keep strictly inside (0, 1) for the inverse CDF.
                let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                (mu + sigma * self.normal.inverse_cdf(p)).exp().clamp(*min, *max)
            }
            SamplerKind::Table(samples) => samples[self.rng.random_range(0..samples.len())],
        }
    }

    /// Log-location of the underlying normal, for lognormal models.
    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            SamplerKind::Lognormal { mu, .. } => Some(mu),
            _ => None,
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// P(x < Z < y) for a standard normal, accurate in both tails.
fn normal_mass(n: &Normal, x: f64, y: f64) -> f64 {
    if x > 0.0 {
        n.sf(x) - n.sf(y)
    } else {
        n.cdf(y) - n.cdf(x)
    }
}

/// Mean of a lognormal(mu, sigma) truncated to `[a, b]`.
pub fn truncated_mean(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let n = std_normal();
    let (la, lb) = (a.ln(), b.ln());
    let den = normal_mass(&n, (la - mu) / sigma, (lb - mu) / sigma);
    let num = normal_mass(&n, (la - mu - sigma * sigma) / sigma, (lb - mu - sigma * sigma) / sigma);
    if den.is_nan() || den <= 0.0 {
        return if mu < la { a } else { b };
    }
    ((mu + sigma * sigma / 2.0).exp() * num / den).clamp(a, b)
}

/// Log-location that gives the truncated lognormal the requested mean.
pub fn solve_mu(mean: f64, sigma: f64, min: f64, max: f64) -> Result<f64, WorkloadError> {
    let mut lo = min.ln() - 6.0 * sigma;
    let mut hi = max.ln() + 6.0 * sigma;
    let f = |mu: f64| truncated_mean(mu, sigma, min, max) - mean;
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(WorkloadError::InvalidModel(format!(
            "no lognormal with sigma {sigma} clipped to [{min}, {max}] has mean {mean}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let m = truncated_mean(mid, sigma, min, max);
        if ((m - mean) / mean).abs() < 1e-6 && hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shape parameter for which the largest of `draws` samples is expected to
/// land at `max` when the mean is `mean`.
pub fn sigma_from_extreme(mean: f64, max: f64, draws: f64) -> Result<f64, WorkloadError> {
    if !(draws > 1.0 && max > mean && mean > 0.0) {
        return Err(WorkloadError::InvalidModel(format!(
            "cannot fit a tail to mean {mean}, max {max}, {draws} draws"
        )));
    }
    let z = std_normal().inverse_cdf(1.0 - 1.0 / draws);
    let r = (max / mean).ln();
    let disc = z * z - 2.0 * r;
    if disc < 0.0 {
        return Err(WorkloadError::InvalidModel(format!(
            "max/mean ratio {:.1} is too large for {draws} draws",
            max / mean
        )));
    }
    Ok(z - disc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskShape {
    pub cpu_cores: u32,
    pub gpus: u32,
    pub ranks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadPreset {
    pub name: String,
    pub item_count: u64,
    pub model: DurationModel,
    /// Work items credited per execution.
    pub bundle_size: u32,
    pub shape: TaskShape,
}

pub const PRESET_NAMES: &[&str] = &["wf1-uc1", "wf1-uc2", "wf1-uc3", "wf3", "wf4"];

impl WorkloadPreset {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.item_count == 0 || self.bundle_size == 0 {
            return Err(WorkloadError::InvalidModel("item count and bundle size must be >= 1".into()));
        }
        self.model.validate()
    }

    /// Number of executions needed to cover all items.
    pub fn executions(&self) -> u64 {
        self.item_count.div_ceil(self.bundle_size as u64)
    }
}

fn docking(name: &str, items: f64, bundle: u32, shape: TaskShape, (min, max, mean): (f64, f64, f64)) -> WorkloadPreset {
    let draws = items / bundle as f64;
    let sigma = sigma_from_extreme(mean, max, draws).expect("preset tail fits");
    WorkloadPreset {
        name: name.into(),
        item_count: items as u64,
        model: DurationModel::lognormal(mean, sigma, min, max),
        bundle_size: bundle,
        shape,
    }
}

pub fn make_preset(name: &str) -> Result<WorkloadPreset, WorkloadError> {
    let cpu = TaskShape { cpu_cores: 1, gpus: 0, ranks: 1 };
    let gpu = TaskShape { cpu_cores: 1, gpus: 1, ranks: 1 };
    let p = match name {
        "wf1-uc1" => docking(name, 370e6, 1, cpu, (0.1, 3582.6, 28.8)),
        "wf1-uc2" => docking(name, 125e6, 1, cpu, (0.1, 833.1, 25.1)),
        "wf1-uc3" => docking(name, 57e6, 16, gpu, (0.1, 263.9, 36.2)),
        "wf3" => WorkloadPreset {
            name: name.into(),
            item_count: 1,
            model: DurationModel::constant(30.0),
            bundle_size: 1,
            shape: gpu,
        },
        "wf4" => WorkloadPreset {
            name: name.into(),
            item_count: 1,
            model: DurationModel::constant(108.0),
            bundle_size: 1,
            shape: TaskShape { cpu_cores: 1, gpus: 0, ranks: 36 },
        },
        _ => return Err(WorkloadError::UnknownPreset(name.into())),
    };
    Ok(p)
}
