//! Conditional score network.
//!
//! A residual MLP maps `[flattened noisy action chunk, diffusion-level
//! embedding, flattened observation chunk]` to an action-chunk-shaped
//! prediction. The same trunk serves both diffusion formulations; only the
//! output convention differs:
//!
//! * `Epsilon` nets (VP) predict the standard-normal noise that was mixed
//!   into the input. The trunk output is the prediction.
//! * `Sample` nets (VE) predict the clean chunk. The trunk is wrapped in
//!   sigma-dependent input/output/skip scalings so that its inputs and
//!   regression targets stay near unit scale across the whole sigma range;
//!   see [`ve_scalings`].
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer and the
//! checkpoint format can treat the network as a single vector. Gradients
//! are hand-written; [`train::loss_score_matching`] checks them against
//! finite differences in the tests.

mod train;

pub use train::{loss_score_matching, train, LossGrad, ScheduleRef, TrainConfig, TrainReport};
pub(crate) use train::Fnv1a;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // test builds link std, whose inherent f64 math shadows this
use num_traits::Float;

use crate::rng::{normal_vec, rng_from_seed};
use crate::tensor::Mat;
use crate::{invalid, Error, Result};

/// What a denoising model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionType {
    /// The standard-normal noise mixed into the input (VP convention).
    Epsilon,
    /// The clean action chunk (VE convention).
    Sample,
}

/// Anything that can denoise an action chunk at a given diffusion level.
///
/// `level` is the integer step `tau` (as a float) for `Epsilon` models and
/// the noise scale `sigma` for `Sample` models. Inputs and outputs are in
/// normalized (z-scored) space; callers handle de-normalization.
pub trait Denoiser {
    fn predict(&self, noisy_action: &Mat, level: f64, obs: &Mat) -> Result<Mat>;
    fn prediction(&self) -> PredictionType;
}

/// Trunk widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    /// Width of every hidden layer.
    pub hidden: usize,
    /// Number of residual blocks after the input layer.
    pub blocks: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            hidden: 128,
            blocks: 2,
        }
    }
}

/// A residual-MLP score network with flat parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    pub arch: Arch,
    pub prediction: PredictionType,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub t_o: usize,
    pub t_p: usize,
    /// Width of the sinusoidal diffusion-level embedding (even, >= 2).
    pub embed_dim: usize,
    pub params: Vec<f64>,
}

/// Sigma-dependent scalings for `Sample` nets: `(c_in, c_skip, c_out)`.
///
/// With unit-variance data the noisy input has variance `1 + sigma^2`;
/// `c_in` whitens it, `c_skip` fades the skip connection out as sigma
/// grows, and `c_out` scales the trunk output so its regression target is
/// unit-variance at every sigma. The prediction is
/// `c_skip * x + c_out * trunk(c_in * x, ...)`.
pub fn ve_scalings(sigma: f64) -> (f64, f64, f64) {
    let v = sigma * sigma + 1.0;
    (1.0 / v.sqrt(), 1.0 / v, sigma / v.sqrt())
}

impl ScoreNet {
    /// A freshly initialized network.
    ///
    /// Hidden weights are scaled-normal with variance `1/fan_in`; all
    /// biases and the entire output layer start at zero, so a new network
    /// predicts the zero chunk (`Epsilon`) or `c_skip * x` (`Sample`).
    pub fn new(
        arch: Arch,
        prediction: PredictionType,
        obs_dim: usize,
        act_dim: usize,
        t_o: usize,
        t_p: usize,
        embed_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || t_o == 0 || t_p == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        if embed_dim < 2 || embed_dim % 2 != 0 {
            return Err(invalid(format!(
                "embed_dim must be even and >= 2, got {embed_dim}"
            )));
        }
        if arch.hidden == 0 {
            return Err(invalid("hidden width must be positive"));
        }
        let mut net = ScoreNet {
            arch,
            prediction,
            obs_dim,
            act_dim,
            t_o,
            t_p,
            embed_dim,
            params: Vec::new(),
        };
        let h = arch.hidden;
        let input = net.in_dim();
        let out = net.out_dim();
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(net.param_count());
        let scaled = |n: usize, fan_in: usize, rng: &mut _| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            normal_vec(n, rng).into_iter().map(|x| s * x).collect()
        };
        params.extend(scaled(h * input, input, &mut rng));
        params.extend(vec![0.0; h]);
        for _ in 0..arch.blocks {
            params.extend(scaled(h * h, h, &mut rng));
            params.extend(vec![0.0; h]);
            params.extend(scaled(h * h, h, &mut rng));
            params.extend(vec![0.0; h]);
        }
        params.extend(vec![0.0; out * h]);
        params.extend(vec![0.0; out]);
        debug_assert_eq!(params.len(), net.param_count());
        net.params = params;
        Ok(net)
    }

    /// Flattened input width: action chunk + embedding + observation chunk.
    pub fn in_dim(&self) -> usize {
        self.t_p * self.act_dim + self.embed_dim + self.t_o * self.obs_dim
    }

    /// Output width, always the flattened action chunk.
    pub fn out_dim(&self) -> usize {
        self.t_p * self.act_dim
    }

    /// Total number of parameters for the configured architecture.
    pub fn param_count(&self) -> usize {
        let h = self.arch.hidden;
        let input = self.in_dim();
        let out = self.out_dim();
        h * input + h + self.arch.blocks * (2 * h * h + 2 * h) + out * h + out
    }

    /// Sinusoidal embedding of the diffusion level.
    ///
    /// `u` is `tau` for `Epsilon` nets and `ln sigma` for `Sample` nets.
    /// The geometric frequency bank is matched to the span of `u`: integer
    /// steps range over ~1e2, log-sigma over ~1e1, and the highest
    /// frequency is chosen so adjacent levels stay well separated.
    pub fn embed_level(&self, u: f64) -> Vec<f64> {
        let (w_hi, w_lo) = match self.prediction {
            PredictionType::Epsilon => (3.0, 0.03),
            PredictionType::Sample => (4.0, 0.25),
        };
        let half = self.embed_dim / 2;
        let ratio: f64 = w_lo / w_hi;
        let mut e = Vec::with_capacity(self.embed_dim);
        for k in 0..half {
            let exponent = if half > 1 {
                k as f64 / (half - 1) as f64
            } else {
                0.0
            };
            let omega = w_hi * ratio.powf(exponent);
            e.push((u * omega).sin());
            e.push((u * omega).cos());
        }
        e
    }

    fn check_shapes(&self, noisy_action: &Mat, obs: &Mat) -> Result<()> {
        if noisy_action.shape() != (self.t_p, self.act_dim) {
            return Err(Error::ShapeMismatch {
                expected_rows: self.t_p,
                expected_cols: self.act_dim,
                rows: noisy_action.rows(),
                cols: noisy_action.cols(),
            });
        }
        if obs.shape() != (self.t_o, self.obs_dim) {
            return Err(Error::ShapeMismatch {
                expected_rows: self.t_o,
                expected_cols: self.obs_dim,
                rows: obs.rows(),
                cols: obs.cols(),
            });
        }
        Ok(())
    }

    /// Assembles the flat trunk input for a (possibly rescaled) noisy chunk.
    fn trunk_input(&self, scaled_action: &[f64], u: f64, obs: &Mat) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.in_dim());
        x.extend_from_slice(scaled_action);
        x.extend(self.embed_level(u));
        x.extend_from_slice(obs.data());
        x
    }

    fn trunk_forward_cached(&self, x: &[f64], cache: &mut TrunkCache) -> Vec<f64> {
        let h = self.arch.hidden;
        let off = self.offsets();
        let p = &self.params;

        let mut z0 = matvec(&p[off.w0.clone()], &p[off.b0.clone()], x, h);
        cache.z0 = z0.clone();
        for v in &mut z0 {
            *v = silu(*v);
        }
        let mut a = z0;
        cache.acts.clear();
        cache.acts.push(a.clone());
        cache.z1.clear();
        for blk in &off.blocks {
            let z1 = matvec(&p[blk.w1.clone()], &p[blk.b1.clone()], &a, h);
            cache.z1.push(z1.clone());
            let mut hid = z1;
            for v in &mut hid {
                *v = silu(*v);
            }
            let delta = matvec(&p[blk.w2.clone()], &p[blk.b2.clone()], &hid, h);
            for (ai, di) in a.iter_mut().zip(&delta) {
                *ai += di;
            }
            cache.acts.push(a.clone());
        }
        matvec(&p[off.w_out.clone()], &p[off.b_out.clone()], &a, self.out_dim())
    }

    /// Backpropagates `d loss / d trunk_output` through the trunk,
    /// accumulating parameter gradients into `grad` (same layout as
    /// `params`). Requires the cache produced by the matching forward pass.
    fn trunk_backward(&self, x: &[f64], cache: &TrunkCache, g_out: &[f64], grad: &mut [f64]) {
        let h = self.arch.hidden;
        let off = self.offsets();
        let p = &self.params;

        let a_last = &cache.acts[self.arch.blocks];
        accumulate_outer(&mut grad[off.w_out.clone()], g_out, a_last);
        accumulate_vec(&mut grad[off.b_out.clone()], g_out);
        let mut g_a = matvec_t(&p[off.w_out.clone()], g_out, h);

        for (j, blk) in off.blocks.iter().enumerate().rev() {
            let z1 = &cache.z1[j];
            let a_prev = &cache.acts[j];
            let hid: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();

            accumulate_outer(&mut grad[blk.w2.clone()], &g_a, &hid);
            accumulate_vec(&mut grad[blk.b2.clone()], &g_a);
            let g_hid = matvec_t(&p[blk.w2.clone()], &g_a, h);
            let g_z1: Vec<f64> = g_hid
                .iter()
                .zip(z1)
                .map(|(&g, &z)| g * silu_deriv(z))
                .collect();
            accumulate_outer(&mut grad[blk.w1.clone()], &g_z1, a_prev);
            accumulate_vec(&mut grad[blk.b1.clone()], &g_z1);
            let g_res = matvec_t(&p[blk.w1.clone()], &g_z1, h);
            for (ga, gr) in g_a.iter_mut().zip(&g_res) {
                *ga += gr;
            }
        }

        let g_z0: Vec<f64> = g_a
            .iter()
            .zip(&cache.z0)
            .map(|(&g, &z)| g * silu_deriv(z))
            .collect();
        accumulate_outer(&mut grad[off.w0.clone()], &g_z0, x);
        accumulate_vec(&mut grad[off.b0.clone()], &g_z0);
    }

    /// Forward pass with cached activations plus the assembled input,
    /// for training. Returns the raw trunk output.
    pub(crate) fn forward_cached(
        &self,
        noisy_action: &Mat,
        level: f64,
        obs: &Mat,
        cache: &mut TrunkCache,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_shapes(noisy_action, obs)?;
        let (scaled, u) = self.scale_input(noisy_action, level);
        let x = self.trunk_input(&scaled, u, obs);
        let y = self.trunk_forward_cached(&x, cache);
        Ok((x, y))
    }

    pub(crate) fn backward(&self, x: &[f64], cache: &TrunkCache, g_out: &[f64], grad: &mut [f64]) {
        self.trunk_backward(x, cache, g_out, grad);
    }

    fn scale_input(&self, noisy_action: &Mat, level: f64) -> (Vec<f64>, f64) {
        match self.prediction {
            PredictionType::Epsilon => (noisy_action.data().to_vec(), level),
            PredictionType::Sample => {
                let (c_in, _, _) = ve_scalings(level);
                (
                    noisy_action.data().iter().map(|&v| c_in * v).collect(),
                    level.ln(),
                )
            }
        }
    }

    fn offsets(&self) -> Offsets {
        Offsets::for_net(self)
    }
}

impl Denoiser for ScoreNet {
    fn predict(&self, noisy_action: &Mat, level: f64, obs: &Mat) -> Result<Mat> {
        let mut cache = TrunkCache::default();
        let (_, y) = self.forward_cached(noisy_action, level, obs, &mut cache)?;
        let out = match self.prediction {
            PredictionType::Epsilon => y,
            PredictionType::Sample => {
                let (_, c_skip, c_out) = ve_scalings(level);
                noisy_action
                    .data()
                    .iter()
                    .zip(&y)
                    .map(|(&x, &f)| c_skip * x + c_out * f)
                    .collect()
            }
        };
        Mat::from_vec(self.t_p, self.act_dim, out)
    }

    fn prediction(&self) -> PredictionType {
        self.prediction
    }
}

/// Activation cache for one trunk forward pass.
#[derive(Debug, Default, Clone)]
pub(crate) struct TrunkCache {
    z0: Vec<f64>,
    z1: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct BlockOffsets {
    w1: core::ops::Range<usize>,
    b1: core::ops::Range<usize>,
    w2: core::ops::Range<usize>,
    b2: core::ops::Range<usize>,
}

#[derive(Debug, Clone)]
struct Offsets {
    w0: core::ops::Range<usize>,
    b0: core::ops::Range<usize>,
    blocks: Vec<BlockOffsets>,
    w_out: core::ops::Range<usize>,
    b_out: core::ops::Range<usize>,
}

impl Offsets {
    fn for_net(net: &ScoreNet) -> Offsets {
        let h = net.arch.hidden;
        let input = net.in_dim();
        let out = net.out_dim();
        let mut cur = 0usize;
        let mut take = |n: usize| {
            let r = cur..cur + n;
            cur += n;
            r
        };
        let w0 = take(h * input);
        let b0 = take(h);
        let mut blocks = Vec::with_capacity(net.arch.blocks);
        for _ in 0..net.arch.blocks {
            blocks.push(BlockOffsets {
                w1: take(h * h),
                b1: take(h),
                w2: take(h * h),
                b2: take(h),
            });
        }
        let w_out = take(out * h);
        let b_out = take(out);
        debug_assert_eq!(cur, net.param_count());
        Offsets {
            w0,
            b0,
            blocks,
            w_out,
            b_out,
        }
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_deriv(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// `w x + b` for a row-major `(rows x x.len())` weight slice.
fn matvec(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    let mut y = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        y.push(acc);
    }
    y
}

/// `w^T g` for a row-major `(g.len() x cols)` weight slice.
fn matvec_t(w: &[f64], g: &[f64], cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    for (r, &gr) in g.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for (yi, wi) in y.iter_mut().zip(row) {
            *yi += wi * gr;
        }
    }
    y
}

/// `grad += g (outer) x` for a row-major `(g.len() x x.len())` slice.
fn accumulate_outer(grad: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (gi, xi) in row.iter_mut().zip(x) {
            *gi += gr * xi;
        }
    }
}

fn accumulate_vec(grad: &mut [f64], g: &[f64]) {
    for (gi, &v) in grad.iter_mut().zip(g) {
        *gi += v;
    }
}
