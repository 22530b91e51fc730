//! Retrieval-accelerated policy inference and the receding-horizon
//! execution loop.
//!
//! The accelerated modes retrieve the expert action chunk whose stored
//! observation window is nearest to the live one, re-noise it to an
//! intermediate level picked by the leap ratio `r`, and denoise only the
//! remaining steps. `r = 0` degenerates to full-length sampling from the
//! usual prior; `r = 1` (VP only) replays the retrieved chunk untouched.
//! Baseline modes generate from pure noise with either the full schedule
//! or a reduced deterministic step count, so speedups can be compared at
//! matched budgets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::envs::{Env, Horizons, Stats};
use crate::kbase::KnowledgeBase;
use crate::nn::Denoiser;
use crate::rng::{derive_seed, normal_mat, rng_from_seed, ChaCha8Rng};
use crate::samplers::{ve_euler, vp_ancestral, vp_fast};
use crate::schedules::{ve_mix, vp_mix, VeSchedule, VpSchedule};
use crate::tensor::Mat;
use crate::{invalid, Error, Result};

/// How an action chunk is produced each generation call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full-length sampling from pure noise.
    BaselineFull,
    /// Reduced deterministic step count from pure noise.
    BaselineFast,
    /// Retrieval warm start, ancestral denoising of the remaining levels.
    RagdpVp,
    /// Retrieval warm start, Euler denoising of the remaining levels.
    RagdpVe,
}

/// Which sampling loop runs underneath a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    VpAncestral,
    VpFast,
    VeEuler,
}

/// Everything needed to reproduce a policy's behavior, minus the trained
/// artifacts themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub mode: Mode,
    /// Leap ratio in `[0, 1]`: the fraction of the denoising schedule the
    /// warm start skips.
    pub r: f64,
    /// Diffusion step count of the underlying schedule.
    pub t: usize,
    /// Reduced step count used by [`Mode::BaselineFast`].
    pub steps: usize,
    pub horizons: Horizons,
    pub rng_seed: u64,
    pub sampler: SamplerKind,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        self.horizons.validate()?;
        if self.t == 0 {
            return Err(invalid("schedule length must be positive"));
        }
        if !self.r.is_finite() || !(0.0..=1.0).contains(&self.r) {
            return Err(invalid(alloc::format!(
                "leap ratio must lie in [0, 1], got {}",
                self.r
            )));
        }
        let sampler_ok = match self.mode {
            Mode::BaselineFull => {
                matches!(self.sampler, SamplerKind::VpAncestral | SamplerKind::VeEuler)
            }
            Mode::BaselineFast => {
                matches!(self.sampler, SamplerKind::VpFast | SamplerKind::VeEuler)
            }
            Mode::RagdpVp => matches!(self.sampler, SamplerKind::VpAncestral),
            Mode::RagdpVe => matches!(self.sampler, SamplerKind::VeEuler),
        };
        if !sampler_ok {
            return Err(invalid(alloc::format!(
                "sampler {:?} does not fit mode {:?}",
                self.sampler,
                self.mode
            )));
        }
        if self.mode == Mode::BaselineFast && (self.steps == 0 || self.steps > self.t) {
            return Err(invalid(alloc::format!(
                "reduced step count must lie in 1..=T, got {}",
                self.steps
            )));
        }
        if self.mode == Mode::RagdpVe && self.r >= 1.0 {
            return Err(invalid(
                "the Euler warm start always denoises from the top level; r = 1 has no replay branch",
            ));
        }
        Ok(())
    }

    fn needs_kb(&self) -> bool {
        matches!(self.mode, Mode::RagdpVp | Mode::RagdpVe)
    }
}

/// The denoising steps a leap ratio leaves over: `floor((1 - r) * T)`.
/// A tiny epsilon absorbs the representation error of ratios like 0.9
/// whose complement is not exact in binary, so the count matches the
/// exact rational value.
pub fn leap_steps(r: f64, t: usize) -> Result<usize> {
    if !r.is_finite() || !(0.0..=1.0).contains(&r) {
        return Err(invalid(alloc::format!(
            "leap ratio must lie in [0, 1], got {r}"
        )));
    }
    let raw = ((1.0 - r) * t as f64 + 1e-9).floor() as usize;
    Ok(raw.min(t))
}

/// Cost counters for one or more generation calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepBudget {
    pub denoise_steps: u64,
    pub network_evals: u64,
    pub retrieval_count: u64,
}

impl StepBudget {
    pub fn accumulate(&mut self, other: StepBudget) {
        self.denoise_steps += other.denoise_steps;
        self.network_evals += other.network_evals;
        self.retrieval_count += other.retrieval_count;
    }
}

/// Trained model plus its schedule, grouped by formulation.
pub enum PolicyModel<'a> {
    Vp {
        net: &'a dyn Denoiser,
        schedule: &'a VpSchedule,
    },
    Ve {
        net: &'a dyn Denoiser,
        schedule: &'a VeSchedule,
    },
}

/// Observation and action statistics used to move between environment
/// units and the normalized space all artifacts live in.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub obs: Stats,
    pub act: Stats,
}

impl Normalization {
    /// Recover the normalization a knowledge base was built with.
    pub fn from_kb(kb: &KnowledgeBase) -> Normalization {
        Normalization {
            obs: Stats {
                mean: kb.embedder.mean.clone(),
                std: kb.embedder.std.clone(),
            },
            act: kb.act_stats.clone(),
        }
    }
}

fn vp_model<'a>(model: &PolicyModel<'a>) -> Result<(&'a dyn Denoiser, &'a VpSchedule)> {
    match model {
        PolicyModel::Vp { net, schedule } => Ok((*net, *schedule)),
        PolicyModel::Ve { .. } => Err(invalid("this mode needs a VP model")),
    }
}

fn ve_model<'a>(model: &PolicyModel<'a>) -> Result<(&'a dyn Denoiser, &'a VeSchedule)> {
    match model {
        PolicyModel::Ve { net, schedule } => Ok((*net, *schedule)),
        PolicyModel::Vp { .. } => Err(invalid("this mode needs a VE model")),
    }
}

/// Generate one normalized action chunk for the observation window
/// `obs_norm` (already normalized, `t_o x obs_dim`). `obs_raw` carries the
/// same window in environment units for retrieval.
fn generate_chunk(
    cfg: &PolicyConfig,
    model: &PolicyModel,
    kb: Option<&KnowledgeBase>,
    obs_raw: &Mat,
    obs_norm: &Mat,
    act_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Mat, StepBudget)> {
    let t_p = cfg.horizons.t_p;
    match cfg.mode {
        Mode::BaselineFull | Mode::BaselineFast => {
            let full = cfg.mode == Mode::BaselineFull;
            match cfg.sampler {
                SamplerKind::VpAncestral | SamplerKind::VpFast => {
                    let (net, sched) = vp_model(model)?;
                    let init = normal_mat(t_p, act_dim, rng);
                    let run = if full {
                        vp_ancestral(net, sched, obs_norm, init, sched.t, rng)?
                    } else {
                        vp_fast(net, sched, obs_norm, init, cfg.steps, sched.t, rng)?
                    };
                    Ok((
                        run.action,
                        StepBudget {
                            denoise_steps: run.model_evals,
                            network_evals: run.model_evals,
                            retrieval_count: 0,
                        },
                    ))
                }
                SamplerKind::VeEuler => {
                    let (net, sched) = ve_model(model)?;
                    let init = normal_mat(t_p, act_dim, rng).scale(sched.sigma_max);
                    let n = if full { sched.t } else { cfg.steps };
                    let run = ve_euler(net, sched, obs_norm, init, n, rng)?;
                    Ok((
                        run.action,
                        StepBudget {
                            denoise_steps: run.model_evals,
                            network_evals: run.model_evals,
                            retrieval_count: 0,
                        },
                    ))
                }
            }
        }
        Mode::RagdpVp => {
            let (net, sched) = vp_model(model)?;
            let kb = kb.ok_or_else(|| invalid("retrieval modes need a knowledge base"))?;
            let hit = kb.retrieve(obs_raw)?;
            let tau_star = leap_steps(cfg.r, sched.t)?;
            let action = if tau_star == 0 {
                // Full leap: the retrieved chunk is executed as is, with
                // no noising and no model calls.
                hit.action
            } else {
                let eps = normal_mat(t_p, act_dim, rng);
                let init = vp_mix(sched, tau_star, &hit.action, &eps)?;
                vp_ancestral(net, sched, obs_norm, init, tau_star, rng)?.action
            };
            Ok((
                action,
                StepBudget {
                    denoise_steps: tau_star as u64,
                    network_evals: tau_star as u64,
                    retrieval_count: 1,
                },
            ))
        }
        Mode::RagdpVe => {
            let (net, sched) = ve_model(model)?;
            let kb = kb.ok_or_else(|| invalid("retrieval modes need a knowledge base"))?;
            let hit = kb.retrieve(obs_raw)?;
            let n = leap_steps(cfg.r, sched.t)?;
            if n == 0 {
                return Err(invalid(alloc::format!(
                    "leap ratio {} leaves no denoising steps on a schedule of length {}",
                    cfg.r,
                    sched.t
                )));
            }
            let eps = normal_mat(t_p, act_dim, rng);
            let init = ve_mix(sched, &hit.action, &eps)?;
            let run = ve_euler(net, sched, obs_norm, init, n, rng)?;
            Ok((
                run.action,
                StepBudget {
                    denoise_steps: run.model_evals,
                    network_evals: run.model_evals,
                    retrieval_count: 1,
                },
            ))
        }
    }
}

/// One accelerated VP generation: retrieve, re-noise to the leap level,
/// denoise the rest, and return the chunk in environment units.
pub fn ragdp_vp_step(
    net: &dyn Denoiser,
    schedule: &VpSchedule,
    kb: &KnowledgeBase,
    obs_raw: &Mat,
    r: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Mat, StepBudget)> {
    let cfg = PolicyConfig {
        mode: Mode::RagdpVp,
        r,
        t: schedule.t,
        steps: 0,
        horizons: Horizons {
            t_o: kb.meta.t_o,
            t_p: kb.meta.t_p,
            t_a: 1,
        },
        rng_seed: 0,
        sampler: SamplerKind::VpAncestral,
    };
    cfg.validate()?;
    let norm = Normalization::from_kb(kb);
    let obs_norm = norm.obs.normalize(obs_raw)?;
    let model = PolicyModel::Vp { net, schedule };
    let (chunk, budget) = generate_chunk(
        &cfg,
        &model,
        Some(kb),
        obs_raw,
        &obs_norm,
        kb.meta.act_dim,
        rng,
    )?;
    Ok((norm.act.denormalize(&chunk)?, budget))
}

/// One accelerated VE generation: retrieve, add top-level noise, run the
/// reduced Euler loop, and return the chunk in environment units.
pub fn ragdp_ve_step(
    net: &dyn Denoiser,
    schedule: &VeSchedule,
    kb: &KnowledgeBase,
    obs_raw: &Mat,
    r: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Mat, StepBudget)> {
    let cfg = PolicyConfig {
        mode: Mode::RagdpVe,
        r,
        t: schedule.t,
        steps: 0,
        horizons: Horizons {
            t_o: kb.meta.t_o,
            t_p: kb.meta.t_p,
            t_a: 1,
        },
        rng_seed: 0,
        sampler: SamplerKind::VeEuler,
    };
    cfg.validate()?;
    let norm = Normalization::from_kb(kb);
    let obs_norm = norm.obs.normalize(obs_raw)?;
    let model = PolicyModel::Ve { net, schedule };
    let (chunk, budget) = generate_chunk(
        &cfg,
        &model,
        Some(kb),
        obs_raw,
        &obs_norm,
        kb.meta.act_dim,
        rng,
    )?;
    Ok((norm.act.denormalize(&chunk)?, budget))
}

/// Monotonic time source for generation timing. The core crate cannot
/// read clocks itself; callers inject one (or [`NullClock`] when timing
/// is irrelevant).
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that always reads zero; all timings come out zero.
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Outcome of one policy episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    /// Environment steps actually executed.
    pub steps: usize,
    /// Generation calls made.
    pub generations: u64,
    /// Budget totals across all generation calls.
    pub budget: StepBudget,
    /// Wall-clock seconds spent inside generation calls.
    pub gen_seconds: f64,
    /// The environment faulted; the episode must be excluded from
    /// averages and counted separately.
    pub invalid: bool,
    pub fault: Option<String>,
}

/// Receding-horizon execution: observe, generate a chunk, execute its
/// first `t_a` actions, repeat until success or the environment's step
/// cap. The observation window is padded by repeating the first
/// observation while the episode is younger than `t_o`, matching how the
/// training chunks were cut.
pub fn rollout(
    env: &mut dyn Env,
    model: &PolicyModel,
    cfg: &PolicyConfig,
    kb: Option<&KnowledgeBase>,
    norm: &Normalization,
    env_seed: u64,
    clock: &dyn Clock,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    if cfg.needs_kb() {
        let kb = kb.ok_or_else(|| invalid("retrieval modes need a knowledge base"))?;
        if kb.meta.t_o != cfg.horizons.t_o
            || kb.meta.t_p != cfg.horizons.t_p
            || kb.meta.obs_dim != env.obs_dim()
            || kb.meta.act_dim != env.act_dim()
        {
            return Err(invalid(
                "knowledge base was built with different horizons or shapes than this policy",
            ));
        }
    }
    if norm.obs.dim() != env.obs_dim() || norm.act.dim() != env.act_dim() {
        return Err(Error::DimMismatch {
            expected: env.obs_dim(),
            got: norm.obs.dim(),
        });
    }

    let t_o = cfg.horizons.t_o;
    let act_dim = env.act_dim();
    let mut rng = rng_from_seed(derive_seed(cfg.rng_seed, env_seed));

    let mut history: Vec<Vec<f64>> = Vec::new();
    let first = env.reset(env_seed);
    history.push(first.into_vec());

    let mut result = EpisodeResult {
        success: false,
        steps: 0,
        generations: 0,
        budget: StepBudget::default(),
        gen_seconds: 0.0,
        invalid: false,
        fault: None,
    };

    'episode: loop {
        let window = Mat::from_fn(t_o, env.obs_dim(), |row, col| {
            let have = history.len();
            let src = (have + row).saturating_sub(t_o).min(have - 1);
            history[src][col]
        });
        let obs_norm = norm.obs.normalize(&window)?;

        let t0 = clock.now_seconds();
        let (chunk_norm, budget) =
            generate_chunk(cfg, model, kb, &window, &obs_norm, act_dim, &mut rng)?;
        result.gen_seconds += clock.now_seconds() - t0;
        result.generations += 1;
        result.budget.accumulate(budget);

        let chunk = norm.act.denormalize(&chunk_norm)?;
        for row in 0..cfg.horizons.t_a {
            let action = Mat::from_vec(1, act_dim, chunk.row(row).to_vec())?;
            match env.step(&action) {
                Ok(out) => {
                    result.steps += 1;
                    history.push(out.obs.into_vec());
                    if out.success {
                        result.success = true;
                        break 'episode;
                    }
                    if out.done {
                        break 'episode;
                    }
                }
                Err(Error::EnvFault(msg)) => {
                    result.invalid = true;
                    result.fault = Some(msg);
                    break 'episode;
                }
                Err(other) => return Err(other),
            }
        }
    }
    Ok(result)
}

/// Ratio of an accelerated method's success rate to its base method's.
/// `None` when the base never succeeds; values above 1 are possible.
pub fn recovery_rate(accelerated: f64, base: f64) -> Option<f64> {
    if base <= 0.0 {
        None
    } else {
        Some(accelerated / base)
    }
}
