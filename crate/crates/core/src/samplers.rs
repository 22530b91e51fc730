//! Generation loops for both diffusion formulations.
//!
//! Three samplers, all usable from pure noise or from a warm start:
//!
//! * [`vp_ancestral`]: the stochastic ancestral loop, one model call per
//!   level from `tau_start` down to 1, fresh noise at every step except
//!   the last.
//! * [`vp_fast`]: deterministic first-order probability-flow stepping
//!   over a uniformly strided subsequence of levels (the classic
//!   eta = 0 reduced-step update). The few-step baseline.
//! * [`ve_euler`]: deterministic Euler stepping of the probability-flow
//!   update in sigma, using the denoiser-to-score identity
//!   `s = (D(a, sigma) - a) / sigma^2`.
//!
//! Every run reports exactly how many model evaluations it spent; the
//! step-budget accounting downstream depends on these counts being exact.

#[allow(unused_imports)] // test builds link std, whose inherent f64 math shadows this
use num_traits::Float;

use crate::nn::{Denoiser, PredictionType};
use crate::rng::{normal_mat, ChaCha8Rng};
use crate::schedules::{VeSchedule, VpSchedule};
use crate::tensor::Mat;
use crate::{invalid, Error, Result};

/// Output of one sampler invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    /// The generated action chunk at noise level 0 (or `sigma_min`).
    pub action: Mat,
    /// Where the run started: `tau_start` for VP samplers, the step count
    /// for the VE sampler.
    pub start_step: usize,
    /// Model evaluations actually performed.
    pub model_evals: u64,
}

/// Wraps a denoiser and counts its evaluations, for tests that want an
/// independent check of the reported budgets.
pub struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    count: core::cell::Cell<u64>,
}

impl<'a> CountingDenoiser<'a> {
    pub fn new(inner: &'a dyn Denoiser) -> Self {
        CountingDenoiser {
            inner,
            count: core::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.count.get()
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn predict(&self, noisy_action: &Mat, level: f64, obs: &Mat) -> Result<Mat> {
        self.count.set(self.count.get() + 1);
        self.inner.predict(noisy_action, level, obs)
    }

    fn prediction(&self) -> PredictionType {
        self.inner.prediction()
    }
}

fn require_prediction(net: &dyn Denoiser, expected: PredictionType) -> Result<()> {
    if net.prediction() != expected {
        return Err(Error::PredictionMismatch {
            expected,
            got: net.prediction(),
        });
    }
    Ok(())
}

/// Stochastic ancestral sampling from level `tau_start` down to 0.
///
/// `init` must already be at noise level `tau_start`: pure `N(0, I)` when
/// `tau_start == T`, or a `vp_mix` warm start at intermediate levels.
/// `tau_start == 0` returns `init` unchanged with zero model evaluations.
/// Exactly `tau_start` model evaluations otherwise; fresh noise is added
/// at every step except the final one.
pub fn vp_ancestral(
    net: &dyn Denoiser,
    sched: &VpSchedule,
    obs: &Mat,
    init: Mat,
    tau_start: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampleRun> {
    require_prediction(net, PredictionType::Epsilon)?;
    if tau_start > sched.t {
        return Err(Error::TauOutOfRange {
            tau: tau_start,
            t: sched.t,
        });
    }

    let mut a = init;
    for tau in (1..=tau_start).rev() {
        let eps_hat = net.predict(&a, tau as f64, obs)?;
        let alpha = sched.alpha_at(tau)?;
        let beta = sched.beta_at(tau)?;
        let ab = sched.alpha_bar_at(tau)?;
        let coef = beta / (1.0 - ab).sqrt();
        let inv_root_alpha = 1.0 / alpha.sqrt();
        a = a.zip_with(&eps_hat, |x, e| inv_root_alpha * (x - coef * e));
        if tau > 1 {
            let z = normal_mat(a.rows(), a.cols(), rng);
            a.add_scaled(sched.sigma_at(tau)?, &z);
        }
    }
    Ok(SampleRun {
        action: a,
        start_step: tau_start,
        model_evals: tau_start as u64,
    })
}

/// Deterministic reduced-step sampling over a strided level subsequence.
///
/// Runs `steps` first-order probability-flow updates over the integer
/// levels `tau_i = tau_start * (steps - i) / steps`, which include both
/// endpoints and are strictly decreasing whenever `steps <= tau_start`.
/// The RNG parameter keeps the sampler interface uniform; no noise is
/// drawn, so the output is independent of the RNG state.
pub fn vp_fast(
    net: &dyn Denoiser,
    sched: &VpSchedule,
    obs: &Mat,
    init: Mat,
    steps: usize,
    tau_start: usize,
    _rng: &mut ChaCha8Rng,
) -> Result<SampleRun> {
    require_prediction(net, PredictionType::Epsilon)?;
    if tau_start > sched.t {
        return Err(Error::TauOutOfRange {
            tau: tau_start,
            t: sched.t,
        });
    }
    if steps == 0 || steps > tau_start {
        return Err(invalid(alloc::format!(
            "steps must lie in 1..=tau_start, got steps={steps}, tau_start={tau_start}"
        )));
    }

    let mut a = init;
    let mut tau = tau_start;
    for i in 1..=steps {
        let tau_next = tau_start * (steps - i) / steps;
        let eps_hat = net.predict(&a, tau as f64, obs)?;
        let ab = sched.alpha_bar_at(tau)?;
        let ab_next = sched.alpha_bar_at(tau_next)?;
        let root_ab = ab.sqrt();
        let root_rem = (1.0 - ab).sqrt();
        let root_ab_next = ab_next.sqrt();
        let root_rem_next = (1.0 - ab_next).sqrt();
        a = a.zip_with(&eps_hat, |x, e| {
            let x0 = (x - root_rem * e) / root_ab;
            root_ab_next * x0 + root_rem_next * e
        });
        tau = tau_next;
    }
    Ok(SampleRun {
        action: a,
        start_step: tau_start,
        model_evals: steps as u64,
    })
}

/// Deterministic Euler stepping in sigma from the top of a VE grid.
///
/// Takes `n_steps` strides of `delta = floor(T / n_steps)` levels; when the
/// stride does not land exactly on level 0, one extra clamping update down
/// to `sigma_min` is appended so the output is always at the bottom of the
/// grid. Model evaluations: `n_steps`, plus one if the clamp fired. The
/// RNG parameter keeps the sampler interface uniform; the update is
/// deterministic.
pub fn ve_euler(
    net: &dyn Denoiser,
    sched: &VeSchedule,
    obs: &Mat,
    init: Mat,
    n_steps: usize,
    _rng: &mut ChaCha8Rng,
) -> Result<SampleRun> {
    require_prediction(net, PredictionType::Sample)?;
    if n_steps == 0 || n_steps > sched.t {
        return Err(invalid(alloc::format!(
            "n_steps must lie in 1..=T, got n_steps={n_steps}, T={}",
            sched.t
        )));
    }

    let delta = sched.t / n_steps;
    let mut a = init;
    let mut tau = sched.t;
    let mut evals = 0u64;
    for _ in 0..n_steps {
        let tau_next = tau - delta;
        a = score_step(net, sched, obs, a, tau, tau_next)?;
        evals += 1;
        tau = tau_next;
    }
    if tau != 0 {
        a = score_step(net, sched, obs, a, tau, 0)?;
        evals += 1;
    }
    Ok(SampleRun {
        action: a,
        start_step: n_steps,
        model_evals: evals,
    })
}

/// One probability-flow Euler update from level `tau` down to `tau_next`,
/// with the score read off the denoiser: `s = (D - a) / sigma^2`.
fn score_step(
    net: &dyn Denoiser,
    sched: &VeSchedule,
    obs: &Mat,
    a: Mat,
    tau: usize,
    tau_next: usize,
) -> Result<Mat> {
    let sigma_hi = sched.sigma_at(tau)?;
    let sigma_lo = sched.sigma_at(tau_next)?;
    let d = net.predict(&a, sigma_hi, obs)?;
    let coef = (sigma_hi - sigma_lo) / sigma_hi;
    Ok(a.zip_with(&d, |x, dv| x + coef * (dv - x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GaussianEpsilonOracle, GaussianSampleOracle, IdentityDenoiser};
    use crate::rng::rng_from_seed;
    use crate::schedules::{make_ve_schedule, ve_mix, vp_mix, VpSchedule};

    const MU: f64 = 0.8;
    const S0: f64 = 0.5;

    fn vp_oracle(sched: &VpSchedule) -> GaussianEpsilonOracle {
        GaussianEpsilonOracle {
            mu: MU,
            s0: S0,
            schedule: sched.clone(),
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn vp_ancestral_zero_start_is_identity() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let mut rng = rng_from_seed(1);
        let init = normal_mat(2, 2, &mut rng);
        let obs = Mat::zeros(1, 1);
        let run = vp_ancestral(&oracle, &sched, &obs, init.clone(), 0, &mut rng).unwrap();
        assert_eq!(run.action, init);
        assert_eq!(run.model_evals, 0);
    }

    #[test]
    fn vp_ancestral_is_deterministic_per_seed() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let init = normal_mat(1, 1, &mut rng_from_seed(3));
        let a = vp_ancestral(&oracle, &sched, &obs, init.clone(), 100, &mut rng_from_seed(9))
            .unwrap();
        let b = vp_ancestral(&oracle, &sched, &obs, init, 100, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.action, b.action);
    }

    #[test]
    fn vp_ancestral_counts_evals_exactly() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let counter = CountingDenoiser::new(&oracle);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(4);
        let init = normal_mat(1, 1, &mut rng);
        let run = vp_ancestral(&counter, &sched, &obs, init, 37, &mut rng).unwrap();
        assert_eq!(run.model_evals, 37);
        assert_eq!(counter.calls(), 37);
    }

    #[test]
    fn vp_ancestral_recovers_gaussian_target_from_pure_noise() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(100);
        let xs: alloc::vec::Vec<f64> = (0..10_000)
            .map(|_| {
                let init = normal_mat(1, 1, &mut rng);
                vp_ancestral(&oracle, &sched, &obs, init, sched.t, &mut rng)
                    .unwrap()
                    .action
                    .get(0, 0)
            })
            .collect();
        let (mean, std) = moments(&xs);
        assert!((mean - MU).abs() / MU < 0.03, "mean {mean}");
        assert!((std - S0).abs() / S0 < 0.05, "std {std}");
    }

    // A warm start at an intermediate level, mixed consistently from clean
    // data, must land on the same target distribution.
    #[test]
    fn vp_ancestral_warm_start_is_consistent() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let tau_star = 50;
        let mut rng = rng_from_seed(101);
        let xs: alloc::vec::Vec<f64> = (0..10_000)
            .map(|_| {
                let a = normal_mat(1, 1, &mut rng).map(|v| MU + S0 * v);
                let eps = normal_mat(1, 1, &mut rng);
                let init = vp_mix(&sched, tau_star, &a, &eps).unwrap();
                vp_ancestral(&oracle, &sched, &obs, init, tau_star, &mut rng)
                    .unwrap()
                    .action
                    .get(0, 0)
            })
            .collect();
        let (mean, std) = moments(&xs);
        assert!((mean - MU).abs() / MU < 0.03, "mean {mean}");
        assert!((std - S0).abs() / S0 < 0.05, "std {std}");
    }

    #[test]
    fn vp_ancestral_rejects_bad_start_and_model() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(0);
        let init = Mat::zeros(1, 1);
        assert!(matches!(
            vp_ancestral(&oracle, &sched, &obs, init.clone(), 101, &mut rng),
            Err(Error::TauOutOfRange { .. })
        ));
        let wrong = GaussianSampleOracle { mu: MU, s0: S0 };
        assert!(matches!(
            vp_ancestral(&wrong, &sched, &obs, init, 10, &mut rng),
            Err(Error::PredictionMismatch { .. })
        ));
    }

    #[test]
    fn vp_fast_single_step_is_the_projected_clean_estimate() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(7);
        let init = normal_mat(1, 1, &mut rng);
        let run = vp_fast(&oracle, &sched, &obs, init.clone(), 1, sched.t, &mut rng).unwrap();
        assert_eq!(run.model_evals, 1);

        let eps_hat = oracle.predict(&init, sched.t as f64, &obs).unwrap();
        let ab = sched.alpha_bar_at(sched.t).unwrap();
        let expected = init.zip_with(&eps_hat, |x, e| (x - (1.0 - ab).sqrt() * e) / ab.sqrt());
        for (got, want) in run.action.data().iter().zip(expected.data()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn vp_fast_output_ignores_rng_state() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let init = normal_mat(1, 1, &mut rng_from_seed(8));
        let a = vp_fast(&oracle, &sched, &obs, init.clone(), 10, 100, &mut rng_from_seed(1))
            .unwrap();
        let b = vp_fast(&oracle, &sched, &obs, init, 10, 100, &mut rng_from_seed(999)).unwrap();
        assert_eq!(a.action, b.action);
    }

    #[test]
    fn vp_fast_dense_matches_gaussian_target() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(102);
        let xs: alloc::vec::Vec<f64> = (0..10_000)
            .map(|_| {
                let init = normal_mat(1, 1, &mut rng);
                vp_fast(&oracle, &sched, &obs, init, sched.t, sched.t, &mut rng)
                    .unwrap()
                    .action
                    .get(0, 0)
            })
            .collect();
        let (mean, std) = moments(&xs);
        assert!((mean - MU).abs() / MU < 0.03, "mean {mean}");
        assert!((std - S0).abs() / S0 < 0.05, "std {std}");
    }

    // Fewer deterministic steps must not get more accurate. Shared input
    // draws make the comparison noise-free.
    #[test]
    fn vp_fast_degrades_monotonically_with_fewer_steps() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let inits: alloc::vec::Vec<Mat> = {
            let mut rng = rng_from_seed(103);
            (0..10_000).map(|_| normal_mat(1, 1, &mut rng)).collect()
        };
        let mut errors = alloc::vec::Vec::new();
        for &steps in &[100usize, 25, 10, 5] {
            let mut rng = rng_from_seed(0);
            let xs: alloc::vec::Vec<f64> = inits
                .iter()
                .map(|init| {
                    vp_fast(&oracle, &sched, &obs, init.clone(), steps, sched.t, &mut rng)
                        .unwrap()
                        .action
                        .get(0, 0)
                })
                .collect();
            let (mean, std) = moments(&xs);
            errors.push((mean - MU).abs() / MU + (std - S0).abs() / S0);
        }
        for w in errors.windows(2) {
            assert!(
                w[1] >= w[0],
                "error should not shrink with fewer steps: {errors:?}"
            );
        }
    }

    #[test]
    fn vp_fast_validates_step_range() {
        let sched = VpSchedule::with_defaults();
        let oracle = vp_oracle(&sched);
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(0);
        let init = Mat::zeros(1, 1);
        assert!(vp_fast(&oracle, &sched, &obs, init.clone(), 0, 100, &mut rng).is_err());
        assert!(vp_fast(&oracle, &sched, &obs, init.clone(), 11, 10, &mut rng).is_err());
        assert!(vp_fast(&oracle, &sched, &obs, init, 10, 101, &mut rng).is_err());
    }

    #[test]
    fn ve_euler_identity_denoiser_is_a_fixed_point() {
        let sched = make_ve_schedule(40, 0.05, 5.0, 7.0).unwrap();
        let obs = Mat::zeros(1, 1);
        let init = normal_mat(2, 2, &mut rng_from_seed(5));
        for n in [1usize, 5, 26, 40] {
            let run = ve_euler(
                &IdentityDenoiser,
                &sched,
                &obs,
                init.clone(),
                n,
                &mut rng_from_seed(0),
            )
            .unwrap();
            assert_eq!(run.action, init, "n = {n}");
        }
    }

    #[test]
    fn ve_euler_eval_counts_including_clamp() {
        let sched = make_ve_schedule(40, 0.05, 5.0, 7.0).unwrap();
        let obs = Mat::zeros(1, 1);
        let oracle = GaussianSampleOracle { mu: MU, s0: S0 };
        for (n, want) in [(40usize, 40u64), (5, 5), (26, 27), (4, 4), (3, 4)] {
            let counter = CountingDenoiser::new(&oracle);
            let init = normal_mat(1, 1, &mut rng_from_seed(6));
            let run =
                ve_euler(&counter, &sched, &obs, init, n, &mut rng_from_seed(0)).unwrap();
            assert_eq!(run.model_evals, want, "n = {n}");
            assert_eq!(counter.calls(), want, "n = {n}");
        }
    }

    #[test]
    fn ve_euler_recovers_gaussian_target_from_warm_start() {
        let sched = make_ve_schedule(40, 0.05, 5.0, 7.0).unwrap();
        let oracle = GaussianSampleOracle { mu: MU, s0: S0 };
        let obs = Mat::zeros(1, 1);
        let mut rng = rng_from_seed(104);
        let xs: alloc::vec::Vec<f64> = (0..10_000)
            .map(|_| {
                let a = normal_mat(1, 1, &mut rng).map(|v| MU + S0 * v);
                let eps = normal_mat(1, 1, &mut rng);
                let init = ve_mix(&sched, &a, &eps).unwrap();
                ve_euler(&oracle, &sched, &obs, init, sched.t, &mut rng)
                    .unwrap()
                    .action
                    .get(0, 0)
            })
            .collect();
        let (mean, std) = moments(&xs);
        assert!((mean - MU).abs() / MU < 0.03, "mean {mean}");
        assert!((std - S0).abs() / S0 < 0.05, "std {std}");
    }

    #[test]
    fn ve_euler_validates_step_count_and_model() {
        let sched = make_ve_schedule(40, 0.05, 5.0, 7.0).unwrap();
        let obs = Mat::zeros(1, 1);
        let oracle = GaussianSampleOracle { mu: MU, s0: S0 };
        let mut rng = rng_from_seed(0);
        assert!(ve_euler(&oracle, &sched, &obs, Mat::zeros(1, 1), 0, &mut rng).is_err());
        assert!(ve_euler(&oracle, &sched, &obs, Mat::zeros(1, 1), 41, &mut rng).is_err());
        let sched_vp = VpSchedule::with_defaults();
        let wrong = vp_oracle(&sched_vp);
        assert!(matches!(
            ve_euler(&wrong, &sched, &obs, Mat::zeros(1, 1), 10, &mut rng),
            Err(Error::PredictionMismatch { .. })
        ));
    }
}
