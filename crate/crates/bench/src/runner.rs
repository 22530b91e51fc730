//! Evaluation engine: expands a run configuration into (cell, model,
//! seed) jobs, rolls them out across a bounded worker pool, and reduces
//! the outcomes to deterministic per-cell records plus a volatile timing
//! sidecar.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ragdp_core::envs::{Env, PointReach2D, PushBox2D};
use ragdp_core::kbase::KnowledgeBase;
use ragdp_core::ragdp::{
    leap_steps, rollout, Clock, Mode, PolicyConfig, PolicyModel, SamplerKind,
};
use ragdp_core::rng::derive_seed3;
use ragdp_core::schedules::{VeSchedule, VpSchedule};

use crate::config::{RunConfig, SweepGrid};
use crate::files::{Checkpoint, ScheduleSpec};
use crate::{BenchError, Result};

/// Which diffusion formulation a model or cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Vp,
    Ve,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vp => "vp",
            ModelKind::Ve => "ve",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "vp" => Ok(ModelKind::Vp),
            "ve" => Ok(ModelKind::Ve),
            other => Err(BenchError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A checkpoint with its schedule rebuilt, ready to drive rollouts.
pub struct LoadedModel {
    pub kind: ModelKind,
    pub checkpoint: Checkpoint,
    schedule: BuiltSchedule,
}

enum BuiltSchedule {
    Vp(VpSchedule),
    Ve(VeSchedule),
}

impl LoadedModel {
    pub fn new(checkpoint: Checkpoint) -> Result<LoadedModel> {
        let (kind, schedule) = match checkpoint.schedule {
            ScheduleSpec::Vp { .. } => (
                ModelKind::Vp,
                BuiltSchedule::Vp(checkpoint.schedule.build_vp()?),
            ),
            ScheduleSpec::Ve { .. } => (
                ModelKind::Ve,
                BuiltSchedule::Ve(checkpoint.schedule.build_ve()?),
            ),
        };
        Ok(LoadedModel {
            kind,
            checkpoint,
            schedule,
        })
    }

    pub fn train_seed(&self) -> u64 {
        self.checkpoint.train_seed
    }

    fn policy_model(&self) -> PolicyModel<'_> {
        match &self.schedule {
            BuiltSchedule::Vp(s) => PolicyModel::Vp {
                net: &self.checkpoint.net,
                schedule: s,
            },
            BuiltSchedule::Ve(s) => PolicyModel::Ve {
                net: &self.checkpoint.net,
                schedule: s,
            },
        }
    }
}

/// One sampling method evaluated over the seed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kind: ModelKind,
    pub mode: Mode,
    pub sampler: SamplerKind,
    /// Reduced step count; only meaningful for [`Mode::BaselineFast`].
    pub steps: usize,
    /// Leap ratio; only meaningful for the retrieval modes.
    pub r: f64,
    pub method: String,
}

impl Cell {
    pub fn baseline_full(kind: ModelKind) -> Cell {
        Cell {
            kind,
            mode: Mode::BaselineFull,
            sampler: match kind {
                ModelKind::Vp => SamplerKind::VpAncestral,
                ModelKind::Ve => SamplerKind::VeEuler,
            },
            steps: 0,
            r: 0.0,
            method: "baseline-full".to_string(),
        }
    }

    pub fn baseline_fast(kind: ModelKind, steps: usize) -> Cell {
        Cell {
            kind,
            mode: Mode::BaselineFast,
            sampler: match kind {
                ModelKind::Vp => SamplerKind::VpFast,
                ModelKind::Ve => SamplerKind::VeEuler,
            },
            steps,
            r: 0.0,
            method: format!("baseline-fast-{steps}"),
        }
    }

    pub fn ragdp(kind: ModelKind, r: f64) -> Cell {
        match kind {
            ModelKind::Vp => Cell {
                kind,
                mode: Mode::RagdpVp,
                sampler: SamplerKind::VpAncestral,
                steps: 0,
                r,
                method: format!("ragdp-vp-r{r}"),
            },
            ModelKind::Ve => Cell {
                kind,
                mode: Mode::RagdpVe,
                sampler: SamplerKind::VeEuler,
                steps: 0,
                r,
                method: format!("ragdp-ve-r{r}"),
            },
        }
    }

    /// RNG stream for this cell under one policy seed and training seed.
    /// Keyed by the cell's identity, not its position in a sweep, so a
    /// single-cell rerun reproduces the sweep's rows exactly.
    pub fn policy_stream(&self, policy_seed: u64, train_seed: u64) -> u64 {
        let mode_rank = match self.mode {
            Mode::BaselineFull => 0u64,
            Mode::BaselineFast => 1,
            Mode::RagdpVp => 2,
            Mode::RagdpVe => 3,
        };
        let s = derive_seed3(policy_seed, train_seed, mode_rank);
        derive_seed3(s, self.steps as u64, self.r.to_bits())
    }

    /// Network evaluations one generation call is expected to spend.
    pub fn nominal_evals(&self, t: usize) -> usize {
        match self.mode {
            Mode::BaselineFull => t,
            Mode::BaselineFast => self.steps,
            Mode::RagdpVp => leap_steps(self.r, t).expect("validated r"),
            Mode::RagdpVe => {
                let n = leap_steps(self.r, t).expect("validated r");
                // The Euler loop appends one clamping step when the
                // stride does not land on the lowest level.
                if n > 0 && t % n != 0 {
                    n + 1
                } else {
                    n
                }
            }
        }
    }
}

/// The full method grid for one model kind: the reference sampler first,
/// then reduced-step baselines, then retrieval cells.
pub fn build_cells(kind: ModelKind, grid: &SweepGrid) -> Vec<Cell> {
    let mut cells = vec![Cell::baseline_full(kind)];
    for &s in &grid.fast_steps {
        cells.push(Cell::baseline_fast(kind, s));
    }
    for &r in &grid.r {
        cells.push(Cell::ragdp(kind, r));
    }
    cells
}

/// One evaluated (cell, training seed) pair. Everything in here is
/// deterministic given the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub kind: String,
    pub method: String,
    /// Expected network evaluations per generation call.
    pub steps: usize,
    pub r: f64,
    pub train_seed: u64,
    pub episodes: usize,
    pub successes: usize,
    /// Episodes excluded because the environment faulted.
    pub invalid: usize,
    pub success_rate: f64,
    pub generations: u64,
    pub network_evals: u64,
    pub retrievals: u64,
}

/// Wall-clock measurements for the same (cell, training seed) pair.
/// Split from [`EvalRow`] because timings never reproduce across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub kind: String,
    pub method: String,
    pub train_seed: u64,
    pub generations: u64,
    pub mean_gen_seconds: f64,
}

pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    pub timing: Vec<TimingRow>,
}

/// Wall clock for generation-call timing.
pub struct StdClock {
    start: Instant,
}

impl StdClock {
    pub fn new() -> StdClock {
        StdClock {
            start: Instant::now(),
        }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "pointreach2d" => Ok(Box::new(PointReach2D::new())),
        "pushbox2d" => Ok(Box::new(PushBox2D::new())),
        other => Err(BenchError::Config(format!("unknown env `{other}`"))),
    }
}

struct Job<'a> {
    cell_idx: usize,
    cell: &'a Cell,
    model_idx: usize,
    model: &'a LoadedModel,
    env_seed: u64,
}

struct JobOutcome {
    cell_idx: usize,
    model_idx: usize,
    success: bool,
    invalid: bool,
    generations: u64,
    network_evals: u64,
    retrievals: u64,
    gen_seconds: f64,
}

/// Runs every cell against every matching model over the evaluation seed
/// grid. Cells run concurrently up to `cfg.workers`; results are reduced
/// in a fixed order so the output never depends on scheduling.
pub fn run_eval(
    cfg: &RunConfig,
    models: &[LoadedModel],
    kb: Option<&KnowledgeBase>,
    cells: &[Cell],
) -> Result<EvalOutcome> {
    let mut jobs = Vec::new();
    for (cell_idx, cell) in cells.iter().enumerate() {
        for (model_idx, model) in models.iter().enumerate() {
            if model.kind != cell.kind {
                continue;
            }
            for ep in 0..cfg.eval.episodes {
                jobs.push(Job {
                    cell_idx,
                    cell,
                    model_idx,
                    model,
                    env_seed: cfg.eval.seed_start + ep as u64,
                });
            }
        }
    }

    let clock = StdClock::new();
    let run_job = |job: &Job| -> Result<JobOutcome> {
        let mut env = make_env(&cfg.task.env)?;
        let model = job.model;
        let policy = PolicyConfig {
            mode: job.cell.mode,
            r: job.cell.r,
            t: model.checkpoint.schedule.t(),
            steps: job.cell.steps,
            horizons: cfg.task.horizons(),
            rng_seed: job.cell.policy_stream(cfg.eval.policy_seed, model.train_seed()),
            sampler: job.cell.sampler,
        };
        let needs_kb = matches!(job.cell.mode, Mode::RagdpVp | Mode::RagdpVe);
        let kb_ref = if needs_kb {
            Some(kb.ok_or_else(|| {
                BenchError::Config(format!(
                    "cell `{}` retrieves from a knowledge base, but none was loaded",
                    job.cell.method
                ))
            })?)
        } else {
            None
        };
        let result = rollout(
            env.as_mut(),
            &model.policy_model(),
            &policy,
            kb_ref,
            &model.checkpoint.norm,
            job.env_seed,
            &clock,
        )?;
        Ok(JobOutcome {
            cell_idx: job.cell_idx,
            model_idx: job.model_idx,
            success: result.success,
            invalid: result.invalid,
            generations: result.generations,
            network_evals: result.budget.network_evals,
            retrievals: result.budget.retrieval_count,
            gen_seconds: result.gen_seconds,
        })
    };

    let outcomes: Vec<JobOutcome> = if cfg.workers == 1 {
        jobs.iter().map(run_job).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| BenchError::Runtime(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<_>>())?
    };

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for (cell_idx, cell) in cells.iter().enumerate() {
        for (model_idx, model) in models.iter().enumerate() {
            if model.kind != cell.kind {
                continue;
            }
            let mine: Vec<&JobOutcome> = outcomes
                .iter()
                .filter(|o| o.cell_idx == cell_idx && o.model_idx == model_idx)
                .collect();
            let episodes = mine.len();
            let invalid = mine.iter().filter(|o| o.invalid).count();
            let successes = mine
                .iter()
                .filter(|o| o.success && !o.invalid)
                .count();
            let valid = episodes - invalid;
            let generations: u64 = mine.iter().map(|o| o.generations).sum();
            let network_evals: u64 = mine.iter().map(|o| o.network_evals).sum();
            let retrievals: u64 = mine.iter().map(|o| o.retrievals).sum();
            let gen_seconds: f64 = mine.iter().map(|o| o.gen_seconds).sum();
            rows.push(EvalRow {
                kind: cell.kind.as_str().to_string(),
                method: cell.method.clone(),
                steps: cell.nominal_evals(model.checkpoint.schedule.t()),
                r: cell.r,
                train_seed: model.train_seed(),
                episodes,
                successes,
                invalid,
                success_rate: if valid == 0 {
                    0.0
                } else {
                    successes as f64 / valid as f64
                },
                generations,
                network_evals,
                retrievals,
            });
            timing.push(TimingRow {
                kind: cell.kind.as_str().to_string(),
                method: cell.method.clone(),
                train_seed: model.train_seed(),
                generations,
                mean_gen_seconds: if generations == 0 {
                    0.0
                } else {
                    gen_seconds / generations as f64
                },
            });
        }
    }
    Ok(EvalOutcome { rows, timing })
}

/// Stable ordering for merged evaluation tables: kind, then method
/// family, then decreasing budget, then seed.
pub fn row_sort_key(row: &EvalRow) -> (u8, u8, u64, u64, u64) {
    let kind_rank = if row.kind == "vp" { 0 } else { 1 };
    let family = if row.method == "baseline-full" {
        0
    } else if row.method.starts_with("baseline-fast") {
        1
    } else {
        2
    };
    (
        kind_rank,
        family,
        u64::MAX - row.steps as u64,
        row.r.to_bits(),
        row.train_seed,
    )
}
