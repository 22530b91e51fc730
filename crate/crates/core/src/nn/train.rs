//! Score-matching loss and the training loop.
//!
//! Each batch row is noised independently: a level is drawn uniformly from
//! the schedule and standard-normal noise is mixed in. The draws are keyed
//! by the row's content (hashed together with a per-call salt) rather than
//! by its position, and rows are reduced in key order. Two consequences
//! fall out: duplicate rows contribute identical terms, so duplicating a
//! batch row leaves the mean loss unchanged, and full-batch training is
//! invariant to dataset row order, bit for bit.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // test builds link std, whose inherent f64 math shadows this
use num_traits::Float;
use rand::RngCore;

use crate::envs::ChunkPair;
use crate::rng::{normal_mat, rng_from_seed, uniform, uniform_index, ChaCha8Rng};
use crate::schedules::{vp_mix, VeSchedule, VpSchedule};
use crate::{invalid, Error, Result};

use super::{ve_scalings, PredictionType, ScoreNet, TrunkCache};

/// A noise schedule of either kind, borrowed for training.
#[derive(Debug, Clone, Copy)]
pub enum ScheduleRef<'a> {
    Vp(&'a VpSchedule),
    Ve(&'a VeSchedule),
}

impl ScheduleRef<'_> {
    fn expected_prediction(&self) -> PredictionType {
        match self {
            ScheduleRef::Vp(_) => PredictionType::Epsilon,
            ScheduleRef::Ve(_) => PredictionType::Sample,
        }
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// First/second moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    pub rng_seed: u64,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            rng_seed: 0,
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(alloc::format!("{name} must lie in (0, 1)")));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("grad_clip must be positive"));
            }
        }
        Ok(())
    }
}

/// Loss value plus the exact gradient with respect to `net.params`.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Per-epoch mean losses from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
}

/// Score-matching loss and gradient over one batch.
///
/// `Epsilon` nets draw an integer level uniformly from `1..=T`, mix the
/// clean chunk to that level, and regress the injected noise under plain
/// MSE (summed over chunk elements, averaged over rows). `Sample` nets
/// draw a sigma-grid level, add `sigma * eps`, and regress the clean chunk
/// under MSE weighted by `(sigma^2 + 1) / sigma^2`, which keeps every
/// level's contribution at unit scale.
pub fn loss_score_matching(
    net: &ScoreNet,
    batch: &[ChunkPair],
    schedule: ScheduleRef,
    rng: &mut ChaCha8Rng,
) -> Result<LossGrad> {
    let indices: Vec<usize> = (0..batch.len()).collect();
    loss_grad_indexed(net, batch, &indices, schedule, rng)
}

fn loss_grad_indexed(
    net: &ScoreNet,
    pairs: &[ChunkPair],
    indices: &[usize],
    schedule: ScheduleRef,
    rng: &mut ChaCha8Rng,
) -> Result<LossGrad> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let expected = schedule.expected_prediction();
    if net.prediction != expected {
        return Err(Error::PredictionMismatch {
            expected,
            got: net.prediction,
        });
    }

    let salt = rng.next_u64();
    let mut keyed: Vec<(u64, usize)> = indices
        .iter()
        .map(|&i| (row_key(salt, &pairs[i]), i))
        .collect();
    keyed.sort_unstable();

    let mut grad = vec![0.0; net.params.len()];
    let mut loss = 0.0;
    let mut cache = TrunkCache::default();
    for &(key, i) in &keyed {
        let pair = &pairs[i];
        let mut row_rng = rng_from_seed(key);
        loss += match schedule {
            ScheduleRef::Vp(s) => {
                row_loss_vp(net, pair, s, &mut row_rng, &mut cache, &mut grad)?
            }
            ScheduleRef::Ve(s) => {
                row_loss_ve(net, pair, s, &mut row_rng, &mut cache, &mut grad)?
            }
        };
    }

    let inv_b = 1.0 / indices.len() as f64;
    loss *= inv_b;
    for g in &mut grad {
        *g *= inv_b;
    }
    Ok(LossGrad { loss, grad })
}

fn row_loss_vp(
    net: &ScoreNet,
    pair: &ChunkPair,
    sched: &VpSchedule,
    row_rng: &mut ChaCha8Rng,
    cache: &mut TrunkCache,
    grad: &mut [f64],
) -> Result<f64> {
    let tau = uniform_index(sched.t, row_rng) + 1;
    let eps = normal_mat(net.t_p, net.act_dim, row_rng);
    let noisy = vp_mix(sched, tau, &pair.act, &eps)?;
    let (x, y) = net.forward_cached(&noisy, tau as f64, &pair.obs, cache)?;

    let mut loss = 0.0;
    let mut g_out = Vec::with_capacity(y.len());
    for (&pred, &target) in y.iter().zip(eps.data()) {
        let r = pred - target;
        loss += r * r;
        g_out.push(2.0 * r);
    }
    net.backward(&x, cache, &g_out, grad);
    Ok(loss)
}

fn row_loss_ve(
    net: &ScoreNet,
    pair: &ChunkPair,
    sched: &VeSchedule,
    row_rng: &mut ChaCha8Rng,
    cache: &mut TrunkCache,
    grad: &mut [f64],
) -> Result<f64> {
    // Draw sigma continuously through the schedule's rho-warp (the grid is
    // the discretization of this distribution), so the net is trained at
    // every level the samplers might visit, not just the grid points.
    let inv_rho = 1.0 / sched.rho;
    let lo = sched.sigma_min.powf(inv_rho);
    let hi = sched.sigma_max.powf(inv_rho);
    let sigma = (lo + uniform(0.0, 1.0, row_rng) * (hi - lo)).powf(sched.rho);
    let eps = normal_mat(net.t_p, net.act_dim, row_rng);
    let noisy = pair.act.zip_with(&eps, |a, e| a + sigma * e);
    let (x, y) = net.forward_cached(&noisy, sigma, &pair.obs, cache)?;

    let (_, c_skip, c_out) = ve_scalings(sigma);
    let weight = (sigma * sigma + 1.0) / (sigma * sigma);
    let mut loss = 0.0;
    let mut g_out = Vec::with_capacity(y.len());
    for ((&f, &xn), &clean) in y.iter().zip(noisy.data()).zip(pair.act.data()) {
        let r = c_skip * xn + c_out * f - clean;
        loss += weight * r * r;
        g_out.push(2.0 * weight * c_out * r);
    }
    net.backward(&x, cache, &g_out, grad);
    Ok(loss)
}

/// Hash of a row's content and the per-call salt; keys the noise draws.
fn row_key(salt: u64, pair: &ChunkPair) -> u64 {
    let mut h = Fnv1a::new();
    h.write_u64(salt);
    h.write_u64(pair.obs.rows() as u64);
    h.write_u64(pair.obs.cols() as u64);
    for &v in pair.obs.data() {
        h.write_u64(v.to_bits());
    }
    h.write_u64(pair.act.rows() as u64);
    h.write_u64(pair.act.cols() as u64);
    for &v in pair.act.data() {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Minibatch Adam over the score-matching loss.
///
/// `cfg.learning_rate` is the peak rate; it decays along a half-cosine to
/// zero over the run, so the final epochs settle instead of bouncing
/// around the optimum. Fully deterministic given `cfg.rng_seed`. Aborts
/// with [`Error::Diverged`] the moment a batch loss stops being finite.
pub fn train(
    net: &mut ScoreNet,
    dataset: &[ChunkPair],
    schedule: ScheduleRef,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut rng = rng_from_seed(cfg.rng_seed);
    let mut m = vec![0.0; net.params.len()];
    let mut v = vec![0.0; net.params.len()];
    let mut step = 0usize;
    let batches_per_epoch = dataset.len().div_ceil(cfg.batch_size.min(dataset.len()));
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _ in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.min(dataset.len())) {
            let lg = loss_grad_indexed(net, dataset, chunk, schedule, &mut rng)?;
            if !lg.loss.is_finite() {
                return Err(Error::Diverged {
                    step: step + 1,
                    loss: lg.loss,
                });
            }
            let progress = step as f64 / total_steps as f64;
            let lr = cfg.learning_rate * 0.5 * (1.0 + (core::f64::consts::PI * progress).cos());
            step += 1;
            let mut grad = lg.grad;
            if let Some(clip) = cfg.grad_clip {
                clip_global_norm(&mut grad, clip);
            }
            adam_step(
                &mut net.params,
                &grad,
                &mut m,
                &mut v,
                step,
                lr,
                cfg.beta1,
                cfg.beta2,
            );
            epoch_loss += lg.loss;
            batches += 1;
        }
        loss_curve.push(epoch_loss / batches as f64);
    }
    Ok(TrainReport { loss_curve })
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = uniform_index(i + 1, rng);
        order.swap(i, j);
    }
}

fn clip_global_norm(grad: &mut [f64], clip: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip {
        let s = clip / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
) {
    let t = step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, Denoiser};
    use crate::rng::normal_mat;
    use crate::schedules::{make_ve_schedule, make_vp_schedule};
    use crate::tensor::Mat;

    fn tiny_net(prediction: PredictionType, seed: u64) -> ScoreNet {
        ScoreNet::new(
            Arch {
                hidden: 6,
                blocks: 1,
            },
            prediction,
            2,
            1,
            1,
            2,
            4,
            seed,
        )
        .unwrap()
    }

    fn random_pairs(n: usize, seed: u64) -> Vec<ChunkPair> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| ChunkPair {
                obs: normal_mat(1, 2, &mut rng),
                act: normal_mat(2, 1, &mut rng),
            })
            .collect()
    }

    #[test]
    fn zero_net_epsilon_loss_matches_noise_second_moment() {
        let net = tiny_net(PredictionType::Epsilon, 1);
        let sched = make_vp_schedule(100, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(10_000, 42);
        let mut rng = rng_from_seed(7);
        let lg = loss_score_matching(&net, &pairs, ScheduleRef::Vp(&sched), &mut rng).unwrap();
        // E loss = t_p * act_dim = 2; the sample mean over 10k rows has
        // standard error sqrt(2 * 2 / 10k) = 0.02.
        assert!((lg.loss - 2.0).abs() < 0.15, "loss {}", lg.loss);
    }

    #[test]
    fn duplicate_rows_leave_loss_unchanged() {
        let net = tiny_net(PredictionType::Epsilon, 2);
        let sched = make_vp_schedule(50, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(1, 3);
        let doubled = alloc::vec![pairs[0].clone(), pairs[0].clone()];
        let single =
            loss_score_matching(&net, &pairs, ScheduleRef::Vp(&sched), &mut rng_from_seed(5))
                .unwrap();
        let double =
            loss_score_matching(&net, &doubled, ScheduleRef::Vp(&sched), &mut rng_from_seed(5))
                .unwrap();
        assert_eq!(single.loss, double.loss);
        assert_eq!(single.grad, double.grad);
    }

    #[test]
    fn loss_is_invariant_to_row_order() {
        let net = tiny_net(PredictionType::Epsilon, 4);
        let sched = make_vp_schedule(50, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(8, 9);
        let mut reversed = pairs.clone();
        reversed.reverse();
        let a = loss_score_matching(&net, &pairs, ScheduleRef::Vp(&sched), &mut rng_from_seed(5))
            .unwrap();
        let b =
            loss_score_matching(&net, &reversed, ScheduleRef::Vp(&sched), &mut rng_from_seed(5))
                .unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn schedule_kind_must_match_prediction_type() {
        let eps_net = tiny_net(PredictionType::Epsilon, 0);
        let ve = make_ve_schedule(10, 0.01, 10.0, 7.0).unwrap();
        let pairs = random_pairs(2, 0);
        let err = loss_score_matching(&eps_net, &pairs, ScheduleRef::Ve(&ve), &mut rng_from_seed(0));
        assert!(matches!(err, Err(Error::PredictionMismatch { .. })));
        let empty: Vec<ChunkPair> = Vec::new();
        let vp = make_vp_schedule(10, 1e-3, 0.2).unwrap();
        assert!(matches!(
            loss_score_matching(&eps_net, &empty, ScheduleRef::Vp(&vp), &mut rng_from_seed(0)),
            Err(Error::EmptyDataset)
        ));
    }

    fn fd_check(prediction: PredictionType, schedule: ScheduleRef, seed: u64) {
        let net = tiny_net(prediction, seed);
        assert!(net.params.len() <= 500, "net too big for FD check");
        let pairs = random_pairs(3, seed ^ 0xdead);
        let base_rng = rng_from_seed(77);

        let analytic =
            loss_score_matching(&net, &pairs, schedule, &mut base_rng.clone()).unwrap();

        let h = 1e-5;
        let mut fd = Vec::with_capacity(net.params.len());
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let lp = loss_score_matching(&plus, &pairs, schedule, &mut base_rng.clone())
                .unwrap()
                .loss;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let lm = loss_score_matching(&minus, &pairs, schedule, &mut base_rng.clone())
                .unwrap()
                .loss;
            fd.push((lp - lm) / (2.0 * h));
        }

        let diff_sq: f64 = analytic
            .grad
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f) * (a - f))
            .sum();
        let fd_sq: f64 = fd.iter().map(|f| f * f).sum();
        let rel = (diff_sq / fd_sq.max(1e-30)).sqrt();
        assert!(rel < 1e-4, "relative gradient error {rel}");
    }

    #[test]
    fn analytic_gradient_matches_finite_differences_vp() {
        let sched = make_vp_schedule(20, 1e-3, 0.2).unwrap();
        for seed in [1, 2, 3] {
            fd_check(PredictionType::Epsilon, ScheduleRef::Vp(&sched), seed);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences_ve() {
        let sched = make_ve_schedule(20, 0.01, 10.0, 7.0).unwrap();
        for seed in [1, 2, 3] {
            fd_check(PredictionType::Sample, ScheduleRef::Ve(&sched), seed);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let sched = make_vp_schedule(20, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(32, 5);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            rng_seed: 11,
            ..TrainConfig::default()
        };
        let mut a = tiny_net(PredictionType::Epsilon, 1);
        let ra = train(&mut a, &pairs, ScheduleRef::Vp(&sched), &cfg).unwrap();
        let mut b = tiny_net(PredictionType::Epsilon, 1);
        let rb = train(&mut b, &pairs, ScheduleRef::Vp(&sched), &cfg).unwrap();
        assert_eq!(ra.loss_curve, rb.loss_curve);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn full_batch_training_ignores_row_order() {
        let sched = make_vp_schedule(20, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(16, 6);
        let mut reordered = pairs.clone();
        reordered.reverse();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: pairs.len(),
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let mut a = tiny_net(PredictionType::Epsilon, 8);
        let ra = train(&mut a, &pairs, ScheduleRef::Vp(&sched), &cfg).unwrap();
        let mut b = tiny_net(PredictionType::Epsilon, 8);
        let rb = train(&mut b, &reordered, ScheduleRef::Vp(&sched), &cfg).unwrap();
        assert_eq!(ra.loss_curve, rb.loss_curve);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn divergence_guard_aborts() {
        let sched = make_vp_schedule(20, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(8, 7);
        let mut net = tiny_net(PredictionType::Epsilon, 1);
        net.params[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut net, &pairs, ScheduleRef::Vp(&sched), &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                grad_clip: Some(0.0),
                ..TrainConfig::default()
            },
        ];
        let sched = make_vp_schedule(20, 1e-3, 0.2).unwrap();
        let pairs = random_pairs(4, 0);
        for cfg in bad {
            let mut net = tiny_net(PredictionType::Epsilon, 0);
            assert!(train(&mut net, &pairs, ScheduleRef::Vp(&sched), &cfg).is_err());
        }
    }

    // Scalar actions all equal to one constant: the optimal denoiser is
    // that constant at every noise level.
    #[test]
    fn constant_action_dataset_learns_the_constant() {
        let c = 0.7;
        let mut rng = rng_from_seed(21);
        let pairs: Vec<ChunkPair> = (0..256)
            .map(|_| ChunkPair {
                obs: normal_mat(1, 1, &mut rng),
                act: Mat::from_fn(1, 1, |_, _| c),
            })
            .collect();
        let sched = make_ve_schedule(40, 0.05, 5.0, 7.0).unwrap();
        let mut net = ScoreNet::new(
            Arch {
                hidden: 64,
                blocks: 2,
            },
            PredictionType::Sample,
            1,
            1,
            1,
            1,
            16,
            17,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 2000,
            batch_size: 64,
            rng_seed: 4,
            ..TrainConfig::default()
        };
        train(&mut net, &pairs, ScheduleRef::Ve(&sched), &cfg).unwrap();

        let obs = normal_mat(1, 1, &mut rng);
        for &sigma in &[0.05, 0.1, 0.33, 0.5, 1.0, 2.5, 5.0] {
            for &e in &[0.3, -0.8] {
                let noisy = Mat::from_fn(1, 1, |_, _| c + sigma * e);
                let pred = net.predict(&noisy, sigma, &obs).unwrap();
                let p = pred.get(0, 0);
                assert!(
                    (p - c).abs() < 1e-2,
                    "sigma {sigma}, eps {e}: predicted {p}, want {c}"
                );
            }
        }
    }
}
