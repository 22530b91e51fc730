//! Noise schedules for the two diffusion formulations.
//!
//! The variance-preserving (VP) schedule is the discrete ancestral one: a
//! linear beta ramp, `alpha = 1 - beta`, and the running product
//! `alpha_bar`. A data point mixed to level `tau` is
//! `sqrt(alpha_bar_tau) * a + sqrt(1 - alpha_bar_tau) * eps`, so signal and
//! noise weights always lie on the unit circle.
//!
//! The variance-exploding (VE) schedule is a rho-warped sigma grid between
//! `sigma_min` and `sigma_max`. Level `tau` carries additive noise of
//! standard deviation `sigma[tau]`; mixing at the top level is
//! `a + sigma_max * eps`.
//!
//! Level indexing is shared by both: `tau = 0` is clean data and `tau = t`
//! is the noisiest level. `alpha_bar_at(0)` is exactly 1 and the VE grid
//! hits `sigma_min` and `sigma_max` exactly, so downstream identities
//! (warm-starting at `tau = 0` is the identity, a full leap replays the
//! retrieved chunk bit for bit) hold without tolerance.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // test builds link std, whose inherent f64 math shadows this
use num_traits::Float;

use crate::tensor::Mat;
use crate::{Error, Result};

/// Default number of ancestral steps.
pub const VP_DEFAULT_T: usize = 100;
/// Default beta ramp endpoints. Chosen so that `alpha_bar` at the final
/// step is ~2e-5: the top level is then indistinguishable from pure noise
/// and sampling from scratch needs no signal leak correction.
pub const VP_DEFAULT_BETA_START: f64 = 1e-3;
pub const VP_DEFAULT_BETA_END: f64 = 0.2;

/// Default number of sigma-space steps.
pub const VE_DEFAULT_T: usize = 40;
pub const VE_DEFAULT_SIGMA_MIN: f64 = 0.002;
pub const VE_DEFAULT_SIGMA_MAX: f64 = 80.0;
pub const VE_DEFAULT_RHO: f64 = 7.0;

/// Discrete variance-preserving schedule.
///
/// All vectors have length `t`; index `i` holds the quantity for step
/// `tau = i + 1`. Use the `_at` accessors to address by level.
#[derive(Debug, Clone, PartialEq)]
pub struct VpSchedule {
    pub t: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Ancestral noise scale, `sqrt(beta)`. On unit-variance data this
    /// matches the reverse kernel almost exactly; the narrower posterior
    /// variance alternative under-disperses noticeably.
    pub sigma: Vec<f64>,
}

impl VpSchedule {
    /// The default pipeline schedule.
    pub fn with_defaults() -> Self {
        make_vp_schedule(VP_DEFAULT_T, VP_DEFAULT_BETA_START, VP_DEFAULT_BETA_END)
            .expect("default parameters are valid")
    }

    /// `alpha_bar` at level `tau`, with `alpha_bar_at(0) == 1` exactly.
    pub fn alpha_bar_at(&self, tau: usize) -> Result<f64> {
        self.check_level(tau)?;
        Ok(if tau == 0 { 1.0 } else { self.alpha_bar[tau - 1] })
    }

    /// `beta` for step `tau` (valid for `1..=t`).
    pub fn beta_at(&self, tau: usize) -> Result<f64> {
        self.check_step(tau)?;
        Ok(self.beta[tau - 1])
    }

    /// `alpha` for step `tau` (valid for `1..=t`).
    pub fn alpha_at(&self, tau: usize) -> Result<f64> {
        self.check_step(tau)?;
        Ok(self.alpha[tau - 1])
    }

    /// Posterior standard deviation for step `tau` (valid for `1..=t`).
    pub fn sigma_at(&self, tau: usize) -> Result<f64> {
        self.check_step(tau)?;
        Ok(self.sigma[tau - 1])
    }

    fn check_level(&self, tau: usize) -> Result<()> {
        if tau > self.t {
            Err(Error::TauOutOfRange { tau, t: self.t })
        } else {
            Ok(())
        }
    }

    fn check_step(&self, tau: usize) -> Result<()> {
        if tau == 0 || tau > self.t {
            Err(Error::TauOutOfRange { tau, t: self.t })
        } else {
            Ok(())
        }
    }
}

/// Builds a VP schedule with a linear beta ramp over `t` steps.
pub fn make_vp_schedule(t: usize, beta_start: f64, beta_end: f64) -> Result<VpSchedule> {
    if t == 0 {
        return Err(Error::InvalidSchedule(format!("t must be >= 1, got {t}")));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )));
    }
    let mut beta = Vec::with_capacity(t);
    if t == 1 {
        beta.push(beta_start);
    } else {
        for i in 0..t {
            beta.push(beta_start + (beta_end - beta_start) * i as f64 / (t - 1) as f64);
        }
    }
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t);
    let mut prod = 1.0;
    for &a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let sigma: Vec<f64> = beta.iter().map(|&b| b.sqrt()).collect();
    Ok(VpSchedule {
        t,
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

/// Mixes clean data to level `tau`:
/// `sqrt(alpha_bar_tau) * a + sqrt(1 - alpha_bar_tau) * eps`.
///
/// At `tau = 0` this is the identity on `a`, bit for bit.
pub fn vp_mix(sched: &VpSchedule, tau: usize, a: &Mat, eps: &Mat) -> Result<Mat> {
    if !a.same_shape(eps) {
        return Err(shape_error(a, eps));
    }
    let ab = sched.alpha_bar_at(tau)?;
    if tau == 0 {
        return Ok(a.clone());
    }
    let ca = ab.sqrt();
    let ce = (1.0 - ab).sqrt();
    Ok(a.zip_with(eps, |x, e| ca * x + ce * e))
}

/// Rho-warped variance-exploding sigma grid.
///
/// `sigma` has length `t + 1`; index `tau` holds the noise scale of level
/// `tau`, ascending from `sigma[0] == sigma_min` to `sigma[t] == sigma_max`
/// (both endpoints exact).
#[derive(Debug, Clone, PartialEq)]
pub struct VeSchedule {
    pub t: usize,
    pub sigma: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl VeSchedule {
    /// The default pipeline grid.
    pub fn with_defaults() -> Self {
        make_ve_schedule(
            VE_DEFAULT_T,
            VE_DEFAULT_SIGMA_MIN,
            VE_DEFAULT_SIGMA_MAX,
            VE_DEFAULT_RHO,
        )
        .expect("default parameters are valid")
    }

    /// Noise scale at level `tau`.
    pub fn sigma_at(&self, tau: usize) -> Result<f64> {
        if tau > self.t {
            Err(Error::TauOutOfRange { tau, t: self.t })
        } else {
            Ok(self.sigma[tau])
        }
    }
}

/// Builds a VE grid with `t + 1` levels warped by exponent `rho`.
pub fn make_ve_schedule(t: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<VeSchedule> {
    if t == 0 {
        return Err(Error::InvalidSchedule(format!("t must be >= 1, got {t}")));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::InvalidSchedule(format!(
            "need 0 < sigma_min < sigma_max, got sigma_min={sigma_min}, sigma_max={sigma_max}"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidSchedule(format!("need rho > 0, got {rho}")));
    }
    let inv_rho = 1.0 / rho;
    let lo = sigma_min.powf(inv_rho);
    let hi = sigma_max.powf(inv_rho);
    let mut sigma = Vec::with_capacity(t + 1);
    sigma.push(sigma_min);
    for i in 1..t {
        let u = i as f64 / t as f64;
        sigma.push((lo + u * (hi - lo)).powf(rho));
    }
    sigma.push(sigma_max);
    Ok(VeSchedule {
        t,
        sigma,
        sigma_min,
        sigma_max,
        rho,
    })
}

/// Mixes clean data to the top VE level: `a + sigma_max * eps`.
pub fn ve_mix(sched: &VeSchedule, a: &Mat, eps: &Mat) -> Result<Mat> {
    if !a.same_shape(eps) {
        return Err(shape_error(a, eps));
    }
    let s = sched.sigma_max;
    Ok(a.zip_with(eps, |x, e| x + s * e))
}

fn shape_error(expected: &Mat, got: &Mat) -> Error {
    Error::ShapeMismatch {
        expected_rows: expected.rows(),
        expected_cols: expected.cols(),
        rows: got.rows(),
        cols: got.cols(),
    }
}
