// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Pipelines of stages of tasks.
//!
//! Stages of a pipeline run one after the other; the tasks of a stage run
//! concurrently, and pipelines run concurrently with each other. Every engine
//! action (submitting a stage, collecting a finished stage) costs one
//! `comm_latency`. An optional adaptive loop repeats a pipeline: after each
//! iteration a hook decides whether to stop, continue with the same first
//! stage, or continue with a fresh first stage.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{run_session, BackendConfig, Client, ClientCx, ExecError, FinishedTask, SessionOutcome};
use crate::log::TaskState;
use crate::resource::{PilotDescription, TaskId};
use crate::scheduler::{Payload, SchedulerConfig, StageRef, TaskDescription};
use crate::time::{self, Micros};
use crate::workload::{DurationModel, DurationSampler, TaskShape, WorkloadError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("pipeline `{0}` has no stages")]
    EmptyPipeline(String),
    #[error("stage `{stage}` of pipeline `{pipeline}` has no tasks")]
    EmptyStage { pipeline: String, stage: String },
    #[error("max_iterations must be >= 1")]
    NoIterations,
    #[error("outlier_probability must be in [0, 1], got {0}")]
    Probability(f64),
    #[error("comm_latency must be >= 0, got {0}")]
    Latency(f64),
    #[error("unknown workflow template `{0}`")]
    UnknownTemplate(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    pub count: usize,
    pub shape: TaskShape,
    pub duration: DurationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl StageSpec {
    pub fn new(name: impl Into<String>, count: usize, shape: TaskShape, duration: DurationModel) -> Self {
        StageSpec { name: name.into(), count, shape, duration, tag: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.stages.is_empty() {
            return Err(WorkflowError::EmptyPipeline(self.name.clone()));
        }
        for s in &self.stages {
            if s.count == 0 {
                return Err(WorkflowError::EmptyStage { pipeline: self.name.clone(), stage: s.name.clone() });
            }
            s.duration.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Abort,
    #[default]
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    RepeatNewTasks,
    RepeatContinue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveLoopConfig {
    pub max_iterations: usize,
    pub outlier_probability: f64,
}

impl Default for AdaptiveLoopConfig {
    fn default() -> Self {
        AdaptiveLoopConfig { max_iterations: 1, outlier_probability: 0.0 }
    }
}

/// Bernoulli stand-in for outlier detection. A pure function of its inputs.
pub fn outlier_decision(cfg: &AdaptiveLoopConfig, seed: u64, pipeline: usize, iteration: usize) -> Decision {
    if iteration + 1 >= cfg.max_iterations {
        return Decision::Stop;
    }
    let key = seed ^ ((pipeline as u64) << 32) ^ iteration as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    if rng.random::<f64>() < cfg.outlier_probability {
        Decision::RepeatNewTasks
    } else {
        Decision::RepeatContinue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub comm_latency_s: f64,
    pub failure_policy: FailurePolicy,
    pub adaptive: AdaptiveLoopConfig,
    pub seed: u64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            comm_latency_s: 0.0,
            failure_policy: FailurePolicy::Continue,
            adaptive: AdaptiveLoopConfig::default(),
            seed: 0,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        if !(self.comm_latency_s.is_finite() && self.comm_latency_s >= 0.0) {
            return Err(WorkflowError::Latency(self.comm_latency_s));
        }
        if self.adaptive.max_iterations == 0 {
            return Err(WorkflowError::NoIterations);
        }
        let p = self.adaptive.outlier_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(WorkflowError::Probability(p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub pipeline: usize,
    pub iteration: usize,
    /// First stage submitted.
    pub start: Micros,
    /// Last task of the last stage terminal.
    pub end: Micros,
    pub decision: Decision,
    pub first_stage_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTaskRecord {
    pub task_id: TaskId,
    pub name: String,
    pub pipeline: usize,
    pub iteration: usize,
    pub stage: usize,
    pub queued: Micros,
    pub finished: Option<Micros>,
    pub state: Option<TaskState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowReport {
    pub iterations: Vec<IterationRecord>,
    pub tasks: Vec<StageTaskRecord>,
    pub aborted: Vec<usize>,
}

struct PipelineRun {
    spec: PipelineSpec,
    samplers: Vec<DurationSampler>,
    iteration: usize,
    stage: usize,
    generation: usize,
    outstanding: usize,
    first_stage: Vec<TaskDescription>,
    iteration_start: Micros,
    aborted: bool,
    finished: bool,
}

/// Runs pipelines as a session client.
pub struct WorkflowEngine {
    cfg: WorkflowConfig,
    latency: Micros,
    runs: Vec<PipelineRun>,
    next_id: u64,
    owner: HashMap<TaskId, usize>,
    report: WorkflowReport,
}

const SUBMIT: u64 = 0;
const COLLECT: u64 = 1;

impl WorkflowEngine {
    pub fn new(pipelines: Vec<PipelineSpec>, cfg: WorkflowConfig) -> Result<Self, WorkflowError> {
        cfg.validate()?;
        let mut runs = Vec::with_capacity(pipelines.len());
        for (pi, spec) in pipelines.into_iter().enumerate() {
            spec.validate()?;
            let samplers = spec
                .stages
                .iter()
                .enumerate()
                .map(|(si, s)| s.duration.sampler(cfg.seed.wrapping_add(((pi as u64) << 8) + si as u64)))
                .collect::<Result<_, _>>()?;
            runs.push(PipelineRun {
                spec,
                samplers,
                iteration: 0,
                stage: 0,
                generation: 0,
                outstanding: 0,
                first_stage: Vec::new(),
                iteration_start: 0,
                aborted: false,
                finished: false,
            });
        }
        Ok(WorkflowEngine {
            latency: time::from_secs(cfg.comm_latency_s),
            cfg,
            runs,
            next_id: 0,
            owner: HashMap::new(),
            report: WorkflowReport::default(),
        })
    }

    pub fn report(&self) -> &WorkflowReport {
        &self.report
    }

    pub fn into_report(self) -> WorkflowReport {
        self.report
    }

    fn build_stage(&mut self, pi: usize, si: usize, names: Option<Vec<String>>) -> Vec<TaskDescription> {
        let run = &mut self.runs[pi];
        let spec = &run.spec.stages[si];
        let (iteration, generation) = (run.iteration, run.generation);
        let mut out = Vec::with_capacity(spec.count);
        for k in 0..spec.count {
            let name = match &names {
                Some(n) => n[k].clone(),
                None if si == 0 => format!("{}.s0.g{generation}.t{k:04}", run.spec.name),
                None => format!("{}.s{si}.i{iteration}.t{k:04}", run.spec.name),
            };
            let seconds = run.samplers[si].sample();
            out.push(TaskDescription {
                task_id: TaskId(0),
                name,
                cpu_cores_per_rank: spec.shape.cpu_cores,
                ranks: spec.shape.ranks,
                gpus: spec.shape.gpus,
                tag: spec.tag.clone(),
                payload: Payload::sleep(seconds),
                stage_ref: Some(StageRef { pipeline: run.spec.name.clone(), stage: si, iteration }),
            });
        }
        out
    }

    fn submit_stage(&mut self, cx: &mut ClientCx, pi: usize) {
        let si = self.runs[pi].stage;
        let tasks = if si == 0 {
            if self.runs[pi].first_stage.is_empty() {
                let t = self.build_stage(pi, 0, None);
                self.runs[pi].first_stage = t;
            }
            self.runs[pi].iteration_start = cx.now();
            self.runs[pi].first_stage.clone()
        } else {
            self.build_stage(pi, si, None)
        };
        let iteration = self.runs[pi].iteration;
        self.runs[pi].outstanding = tasks.len();
        for mut t in tasks {
            t.task_id = TaskId(self.next_id);
            self.next_id += 1;
            self.owner.insert(t.task_id, pi);
            self.report.tasks.push(StageTaskRecord {
                task_id: t.task_id,
                name: t.name.clone(),
                pipeline: pi,
                iteration,
                stage: si,
                queued: cx.now(),
                finished: None,
                state: None,
            });
            if let Some(r) = t.stage_ref.as_mut() {
                r.iteration = iteration;
            }
            cx.submit(t);
        }
    }

    fn collect_stage(&mut self, cx: &mut ClientCx, pi: usize) {
        let run = &mut self.runs[pi];
        if run.aborted {
            run.finished = true;
            self.report.aborted.push(pi);
            return;
        }
        if run.stage + 1 < run.spec.stages.len() {
            run.stage += 1;
            cx.after(self.latency, pi as u64 * 2 + SUBMIT);
            return;
        }
        let decision = outlier_decision(&self.cfg.adaptive, self.cfg.seed, pi, run.iteration);
        self.report.iterations.push(IterationRecord {
            pipeline: pi,
            iteration: run.iteration,
            start: run.iteration_start,
            end: cx.now() - self.latency,
            decision,
            first_stage_names: run.first_stage.iter().map(|t| t.name.clone()).collect(),
        });
        match decision {
            Decision::Stop => run.finished = true,
            Decision::RepeatContinue | Decision::RepeatNewTasks => {
                if decision == Decision::RepeatNewTasks {
                    run.generation += 1;
                    run.first_stage.clear();
                }
                run.iteration += 1;
                run.stage = 0;
                cx.after(self.latency, pi as u64 * 2 + SUBMIT);
            }
        }
    }
}

impl Client for WorkflowEngine {
    fn start(&mut self, cx: &mut ClientCx) {
        for pi in 0..self.runs.len() {
            cx.after(self.latency, pi as u64 * 2 + SUBMIT);
        }
    }

    fn on_task_finished(&mut self, cx: &mut ClientCx, task: &FinishedTask) {
        let Some(pi) = self.owner.remove(&task.task_id) else { return };
        let rec = &mut self.report.tasks[task.task_id.0 as usize];
        rec.finished = Some(task.time);
        rec.state = Some(task.state);
        let run = &mut self.runs[pi];
        if task.state != TaskState::Done && self.cfg.failure_policy == FailurePolicy::Abort {
            run.aborted = true;
        }
        run.outstanding -= 1;
        if run.outstanding == 0 {
            cx.after(self.latency, pi as u64 * 2 + COLLECT);
        }
    }

    fn on_timer(&mut self, cx: &mut ClientCx, token: u64) {
        let pi = (token / 2) as usize;
        match token % 2 {
            SUBMIT => self.submit_stage(cx, pi),
            _ => self.collect_stage(cx, pi),
        }
    }

    fn is_done(&self) -> bool {
        self.runs.iter().all(|r| r.finished)
    }
}

/// Runs `pipelines` to completion on a fresh pilot.
pub fn run_pipelines(
    pipelines: Vec<PipelineSpec>,
    cfg: &WorkflowConfig,
    pilot: &PilotDescription,
    sched: &SchedulerConfig,
    backend: &BackendConfig,
) -> Result<(SessionOutcome, WorkflowReport), WorkflowError> {
    let mut engine = WorkflowEngine::new(pipelines, cfg.clone())?;
    let out = run_session(pilot, sched, backend, &mut engine)?;
    Ok((out, engine.into_report()))
}

/// Named pipeline templates.
pub mod templates {
    use super::*;

    pub const NAMES: &[&str] = &["wf1-overlay", "wf2-deepdrive", "wf3-esmacs", "wf4-ties", "hybrid-lb", "bag"];

    fn jitter(mean: f64, rel: f64) -> DurationModel {
        DurationModel::lognormal(mean, rel, mean * (1.0 - 4.0 * rel), mean * (1.0 + 4.0 * rel))
    }

    pub fn gpu_task() -> TaskShape {
        TaskShape { cpu_cores: 1, gpus: 1, ranks: 1 }
    }

    /// Simulation ensemble, aggregation, training and inference on `nodes`
    /// six-GPU nodes: one simulation per GPU, one training and one inference
    /// task per 20 nodes.
    pub fn deepdrive(nodes: usize) -> PipelineSpec {
        let gpus = nodes * 6;
        let per20 = nodes.div_ceil(20);
        let node_gpus = TaskShape { cpu_cores: 6, gpus: 6, ranks: 1 };
        PipelineSpec {
            name: "ddmd".into(),
            stages: vec![
                StageSpec::new("md", gpus, gpu_task(), jitter(1350.0, 0.002)),
                StageSpec::new("aggregate", per20, TaskShape { cpu_cores: 4, gpus: 0, ranks: 1 }, jitter(30.0, 0.01)),
                StageSpec::new("train", per20, node_gpus, jitter(60.0, 0.01)),
                StageSpec::new("infer", per20, node_gpus, jitter(30.0, 0.01)),
            ],
        }
    }

    /// Four single-task GPU stages.
    pub fn esmacs(i: usize) -> PipelineSpec {
        PipelineSpec {
            name: format!("wf3.{i:05}"),
            stages: (0..4).map(|s| StageSpec::new(format!("s{s}"), 1, gpu_task(), jitter(30.0, 0.02))).collect(),
        }
    }

    /// Three single-task 36-rank CPU stages.
    pub fn ties(i: usize) -> PipelineSpec {
        let shape = TaskShape { cpu_cores: 1, gpus: 0, ranks: 36 };
        PipelineSpec {
            name: format!("wf4.{i:05}"),
            stages: (0..3).map(|s| StageSpec::new(format!("s{s}"), 1, shape, jitter(108.0, 0.02))).collect(),
        }
    }

    pub fn hybrid(wf3: usize, wf4: usize) -> Vec<PipelineSpec> {
        (0..wf4).map(ties).chain((0..wf3).map(esmacs)).collect()
    }

    /// Load-balanced mix on `nodes` nodes: the TIES pipelines are chained
    /// into at most `nodes` lanes so no more than one 36-rank task per node
    /// is active, leaving the remaining cores to the GPU tasks.
    pub fn hybrid_lb(wf3: usize, wf4: usize, nodes: usize) -> Vec<PipelineSpec> {
        let lanes = wf4.min(nodes.max(1));
        let chained = (0..lanes).map(|lane| {
            let stages = (lane..wf4)
                .step_by(lanes)
                .flat_map(|i| {
                    ties(i).stages.into_iter().map(move |mut s| {
                        s.name = format!("p{i:05}.{}", s.name);
                        s
                    })
                })
                .collect();
            PipelineSpec { name: format!("wf4.lane{lane:04}"), stages }
        });
        chained.chain((0..wf3).map(esmacs)).collect()
    }

    /// Task count of a hybrid mix.
    pub fn hybrid_tasks(wf3: usize, wf4: usize) -> usize {
        wf3 * 4 + wf4 * 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::resource::{NodeSpec, ResourceSpec};

    fn pilot(nodes: usize, cores: u32, gpus: u32) -> PilotDescription {
        PilotDescription::new(ResourceSpec::homogeneous("t", nodes, NodeSpec::new(0, cores, gpus)), 1e7)
    }

    fn cpu(n: usize, secs: f64) -> StageSpec {
        StageSpec::new("s", n, TaskShape { cpu_cores: 1, gpus: 0, ranks: 1 }, DurationModel::constant(secs))
    }

    fn run(p: Vec<PipelineSpec>, cfg: &WorkflowConfig, pilot: &PilotDescription) -> (SessionOutcome, WorkflowReport) {
        run_pipelines(p, cfg, pilot, &SchedulerConfig::default(), &BackendConfig::direct()).unwrap()
    }

    #[test]
    fn zero_duration_stages_take_no_time() {
        let p = PipelineSpec { name: "p".into(), stages: vec![cpu(1, 0.0), cpu(1, 0.0)] };
        let (out, _) = run(vec![p], &WorkflowConfig::default(), &pilot(1, 1, 0));
        let ov = metrics::overhead(&out.log).unwrap();
        assert_eq!(ov.ttx_us, 0);
    }

    #[test]
    fn stage_packing() {
        let p = PipelineSpec { name: "p".into(), stages: vec![cpu(10, 1.0)] };
        let (out, _) = run(vec![p], &WorkflowConfig::default(), &pilot(1, 5, 0));
        assert_eq!(out.end, 2_000_000);
    }

    #[test]
    fn stage_barrier_and_latency() {
        let p = PipelineSpec { name: "p".into(), stages: vec![cpu(3, 1.0), cpu(2, 2.0), cpu(1, 1.0)] };
        let cfg = WorkflowConfig { comm_latency_s: 0.5, ..Default::default() };
        let (_, rep) = run(vec![p], &cfg, &pilot(1, 4, 0));
        for s in 1..3 {
            let prev_end = rep.tasks.iter().filter(|t| t.stage == s - 1).filter_map(|t| t.finished).max().unwrap();
            let next_q = rep.tasks.iter().filter(|t| t.stage == s).map(|t| t.queued).min().unwrap();
            assert_eq!(next_q - prev_end, 1_000_000);
        }
    }

    #[test]
    fn continue_branch_keeps_first_stage() {
        let p = PipelineSpec { name: "p".into(), stages: vec![cpu(2, 1.0), cpu(1, 1.0)] };
        let cfg = WorkflowConfig {
            adaptive: AdaptiveLoopConfig { max_iterations: 3, outlier_probability: 0.0 },
            ..Default::default()
        };
        let (_, rep) = run(vec![p], &cfg, &pilot(1, 2, 0));
        assert_eq!(rep.iterations.len(), 3);
        assert!(rep.iterations.windows(2).all(|w| w[0].first_stage_names == w[1].first_stage_names));
        let ids: Vec<_> = rep.tasks.iter().map(|t| t.task_id).collect();
        let mut dedup = ids.clone();
        dedup.dedup();
        assert_eq!(ids, dedup);
    }

    #[test]
    fn new_tasks_branch_renames() {
        let p = PipelineSpec { name: "p".into(), stages: vec![cpu(2, 1.0)] };
        let cfg = WorkflowConfig {
            adaptive: AdaptiveLoopConfig { max_iterations: 2, outlier_probability: 1.0 },
            ..Default::default()
        };
        let (_, rep) = run(vec![p], &cfg, &pilot(1, 2, 0));
        assert_ne!(rep.iterations[0].first_stage_names, rep.iterations[1].first_stage_names);
    }

    #[test]
    fn hook_is_pure() {
        let cfg = AdaptiveLoopConfig { max_iterations: 8, outlier_probability: 0.5 };
        let a: Vec<_> = (0..8).map(|i| outlier_decision(&cfg, 3, 0, i)).collect();
        let b: Vec<_> = (0..8).map(|i| outlier_decision(&cfg, 3, 0, i)).collect();
        assert_eq!(a, b);
        assert_eq!(a[7], Decision::Stop);
    }

    #[test]
    fn abort_policy_stops_pipeline() {
        // A stage that cannot be placed fails; abort skips the rest.
        let big = StageSpec::new("big", 1, TaskShape { cpu_cores: 8, gpus: 0, ranks: 1 }, DurationModel::constant(1.0));
        let p = PipelineSpec { name: "p".into(), stages: vec![big, cpu(1, 1.0)] };
        let cfg = WorkflowConfig { failure_policy: FailurePolicy::Abort, ..Default::default() };
        let (out, rep) = run(vec![p.clone()], &cfg, &pilot(1, 2, 0));
        assert_eq!(rep.aborted, vec![0]);
        assert_eq!(out.total(), 1);
        let (out, _) = run(vec![p], &WorkflowConfig::default(), &pilot(1, 2, 0));
        assert_eq!((out.done, out.failed), (1, 1));
    }

    #[test]
    fn hybrid_counts() {
        assert_eq!(templates::hybrid_tasks(1352, 84), 5660);
        assert_eq!(templates::hybrid_tasks(5408, 336), 22640);
        let lb = templates::hybrid_lb(1352, 84, 32);
        assert_eq!(lb.len(), 32 + 1352);
        let tasks: usize = lb.iter().flat_map(|p| &p.stages).map(|s| s.count).sum();
        assert_eq!(tasks, 5660);
        assert!(PipelineSpec { name: "e".into(), stages: vec![] }.validate().is_err());
    }
}
