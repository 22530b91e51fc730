//! Toy control tasks with scripted experts, plus demonstration datasets
//! sliced into observation/action chunks for training and retrieval.
//!
//! Two environments: [`PointReach2D`] (drive a point to a goal, easy and
//! deliberately multimodal through curved expert detours) and
//! [`PushBox2D`] (quasi-static pushing, contact-rich with a two-phase
//! expert). Both are deterministic given a reset seed, which keeps every
//! downstream artifact reproducible.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // test builds link std, whose inherent f64 math shadows this
use num_traits::Float;

use crate::rng::{rng_from_seed, standard_normal, uniform, uniform_index, ChaCha8Rng};
use crate::tensor::Mat;
use crate::{invalid, Error, Result};

/// One observation window plus the action chunk that follows it, both in
/// normalized coordinates: `obs` is `T_o x obs_dim`, `act` is
/// `T_p x act_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPair {
    pub obs: Mat,
    pub act: Mat,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Observation after the action was applied.
    pub obs: Mat,
    /// Task solved at this step.
    pub success: bool,
    /// Episode over: success or the step cap was hit.
    pub done: bool,
}

/// Minimal episodic environment interface. Instances are single-threaded;
/// create one per concurrent rollout.
pub trait Env {
    fn id(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    /// Start a fresh episode, deterministic per seed, returning the first
    /// observation.
    fn reset(&mut self, seed: u64) -> Mat;
    /// Apply one action. Stepping a finished episode or passing a
    /// non-finite action is a fault.
    fn step(&mut self, action: &Mat) -> Result<StepOutcome>;
}

/// A scripted demonstrator for an environment.
pub trait Expert {
    fn id(&self) -> &'static str;
    /// Called once per episode; lets the expert draw per-episode choices
    /// (such as a detour mode) from the dataset RNG stream.
    fn begin_episode(&mut self, rng: &mut ChaCha8Rng);
    fn act(&self, obs: &Mat) -> Mat;
}

fn clip_unit(v: f64) -> f64 {
    v.max(-1.0).min(1.0)
}

fn norm2(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

fn check_action(action: &Mat, act_dim: usize) -> Result<(f64, f64)> {
    if action.rows() != 1 || action.cols() != act_dim {
        return Err(Error::ShapeMismatch {
            expected_rows: 1,
            expected_cols: act_dim,
            rows: action.rows(),
            cols: action.cols(),
        });
    }
    let vx = action.get(0, 0);
    let vy = action.get(0, 1);
    if !vx.is_finite() || !vy.is_finite() {
        return Err(Error::EnvFault(String::from("non-finite action")));
    }
    Ok((vx, vy))
}

/// Drive a point agent to a goal. Observation is
/// `(agent_x, agent_y, goal_x, goal_y)`; the action is a velocity command
/// clipped per axis to `[-1, 1]`. Success when the agent is within
/// `success_radius` of the goal.
#[derive(Debug, Clone)]
pub struct PointReach2D {
    agent: [f64; 2],
    goal: [f64; 2],
    steps: usize,
    done: bool,
    pub dt: f64,
    pub success_radius: f64,
    pub max_steps: usize,
}

impl PointReach2D {
    pub fn new() -> Self {
        PointReach2D {
            agent: [0.0; 2],
            goal: [0.0; 2],
            steps: 0,
            done: true,
            dt: 0.025,
            success_radius: 0.05,
            max_steps: 300,
        }
    }

    fn observe(&self) -> Mat {
        Mat::from_vec(
            1,
            4,
            alloc::vec![self.agent[0], self.agent[1], self.goal[0], self.goal[1]],
        )
        .unwrap()
    }
}

impl Default for PointReach2D {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointReach2D {
    fn id(&self) -> &'static str {
        "point_reach_2d"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, seed: u64) -> Mat {
        let mut rng = rng_from_seed(seed);
        self.agent = [uniform(-0.9, 0.9, &mut rng), uniform(-0.9, 0.9, &mut rng)];
        loop {
            self.goal = [uniform(-0.9, 0.9, &mut rng), uniform(-0.9, 0.9, &mut rng)];
            let d = norm2(self.goal[0] - self.agent[0], self.goal[1] - self.agent[1]);
            if d >= 0.5 {
                break;
            }
        }
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Mat) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EnvFault(String::from("step after episode end")));
        }
        let (vx, vy) = check_action(action, 2)?;
        self.agent[0] = clip_unit(self.agent[0] + self.dt * clip_unit(vx));
        self.agent[1] = clip_unit(self.agent[1] + self.dt * clip_unit(vy));
        self.steps += 1;
        let dist = norm2(self.goal[0] - self.agent[0], self.goal[1] - self.agent[1]);
        let success = dist < self.success_radius;
        self.done = success || self.steps >= self.max_steps;
        Ok(StepOutcome {
            obs: self.observe(),
            success,
            done: self.done,
        })
    }
}

/// Detour choice for the point-reach expert. Curved modes make the
/// demonstration distribution multimodal: the same observation admits
/// three distinct expert actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetourMode {
    Straight,
    CurveLeft,
    CurveRight,
}

const REACH_GAIN: f64 = 3.0;
const CURVE_WEIGHT: f64 = 0.8;

/// Proportional controller toward the goal, optionally blended with a
/// perpendicular component that spirals in. Output is clipped to the
/// action bounds.
pub fn expert_pointreach(state: &Mat, mode: DetourMode) -> Mat {
    let ux = state.get(0, 2) - state.get(0, 0);
    let uy = state.get(0, 3) - state.get(0, 1);
    let w = match mode {
        DetourMode::Straight => 0.0,
        DetourMode::CurveLeft => CURVE_WEIGHT,
        DetourMode::CurveRight => -CURVE_WEIGHT,
    };
    let vx = REACH_GAIN * (ux + w * -uy);
    let vy = REACH_GAIN * (uy + w * ux);
    Mat::from_vec(1, 2, alloc::vec![clip_unit(vx), clip_unit(vy)]).unwrap()
}

/// Expert wrapper that draws a fresh detour mode each episode.
#[derive(Debug, Clone)]
pub struct PointReachExpert {
    pub mode: DetourMode,
}

impl PointReachExpert {
    pub fn new() -> Self {
        PointReachExpert {
            mode: DetourMode::Straight,
        }
    }
}

impl Default for PointReachExpert {
    fn default() -> Self {
        Self::new()
    }
}

impl Expert for PointReachExpert {
    fn id(&self) -> &'static str {
        "expert_pointreach"
    }

    fn begin_episode(&mut self, rng: &mut ChaCha8Rng) {
        self.mode = match uniform_index(3, rng) {
            0 => DetourMode::Straight,
            1 => DetourMode::CurveLeft,
            _ => DetourMode::CurveRight,
        };
    }

    fn act(&self, obs: &Mat) -> Mat {
        expert_pointreach(obs, self.mode)
    }
}

const AGENT_RADIUS: f64 = 0.06;
const BOX_RADIUS: f64 = 0.10;
const CONTACT_DIST: f64 = AGENT_RADIUS + BOX_RADIUS;

/// Quasi-static pushing task. Observation is
/// `(agent_x, agent_y, box_x, box_y, box_angle, target_x, target_y)`;
/// the action is a velocity command clipped per axis to `[-1, 1]`. The
/// box moves only while the agent disc overlaps it (it is projected out
/// of the overlap), and it picks up a little spin when pushed off-axis.
/// Success when the box center is within `tol` of the target.
#[derive(Debug, Clone)]
pub struct PushBox2D {
    agent: [f64; 2],
    box_pos: [f64; 2],
    box_angle: f64,
    target: [f64; 2],
    steps: usize,
    done: bool,
    pub dt: f64,
    pub tol: f64,
    pub max_steps: usize,
}

impl PushBox2D {
    pub fn new() -> Self {
        PushBox2D {
            agent: [0.0; 2],
            box_pos: [0.0; 2],
            box_angle: 0.0,
            target: [0.0; 2],
            steps: 0,
            done: true,
            dt: 0.025,
            tol: 0.08,
            max_steps: 300,
        }
    }

    fn observe(&self) -> Mat {
        Mat::from_vec(
            1,
            7,
            alloc::vec![
                self.agent[0],
                self.agent[1],
                self.box_pos[0],
                self.box_pos[1],
                self.box_angle,
                self.target[0],
                self.target[1],
            ],
        )
        .unwrap()
    }
}

impl Default for PushBox2D {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PushBox2D {
    fn id(&self) -> &'static str {
        "push_box_2d"
    }

    fn obs_dim(&self) -> usize {
        7
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, seed: u64) -> Mat {
        let mut rng = rng_from_seed(seed);
        self.box_pos = [uniform(-0.4, 0.4, &mut rng), uniform(-0.4, 0.4, &mut rng)];
        loop {
            self.target = [uniform(-0.6, 0.6, &mut rng), uniform(-0.6, 0.6, &mut rng)];
            let d = norm2(
                self.target[0] - self.box_pos[0],
                self.target[1] - self.box_pos[1],
            );
            if (0.4..=0.9).contains(&d) {
                break;
            }
        }
        loop {
            self.agent = [uniform(-0.9, 0.9, &mut rng), uniform(-0.9, 0.9, &mut rng)];
            let d = norm2(
                self.agent[0] - self.box_pos[0],
                self.agent[1] - self.box_pos[1],
            );
            if d >= 0.25 {
                break;
            }
        }
        self.box_angle = 0.0;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Mat) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EnvFault(String::from("step after episode end")));
        }
        let (vx, vy) = check_action(action, 2)?;
        let vx = clip_unit(vx);
        let vy = clip_unit(vy);
        self.agent[0] = clip_unit(self.agent[0] + self.dt * vx);
        self.agent[1] = clip_unit(self.agent[1] + self.dt * vy);

        let dx = self.box_pos[0] - self.agent[0];
        let dy = self.box_pos[1] - self.agent[1];
        let dist = norm2(dx, dy);
        if dist < CONTACT_DIST {
            let (nx, ny) = if dist > 1e-12 {
                (dx / dist, dy / dist)
            } else {
                (1.0, 0.0)
            };
            let new_bx = clip_unit(self.agent[0] + nx * CONTACT_DIST);
            let new_by = clip_unit(self.agent[1] + ny * CONTACT_DIST);
            let moved = norm2(new_bx - self.box_pos[0], new_by - self.box_pos[1]);
            let speed = norm2(vx, vy);
            if speed > 1e-12 {
                self.box_angle += 2.0 * cross2(vx / speed, vy / speed, nx, ny) * moved;
            }
            self.box_pos = [new_bx, new_by];
        }

        self.steps += 1;
        let dist_to_target = norm2(
            self.box_pos[0] - self.target[0],
            self.box_pos[1] - self.target[1],
        );
        let success = dist_to_target < self.tol;
        self.done = success || self.steps >= self.max_steps;
        Ok(StepOutcome {
            obs: self.observe(),
            success,
            done: self.done,
        })
    }
}

const PUSH_STANDOFF: f64 = CONTACT_DIST + 0.04;
const PUSH_PRESS: f64 = 0.08;
const ORBIT_RADIUS: f64 = 0.24;

/// Two-phase pushing controller: circle around to the far side of the box
/// (orbiting at a safe radius when the straight path is blocked), then
/// press through a point just behind the box center so the contact
/// projection carries the box toward the target.
pub fn expert_pushbox(state: &Mat) -> Mat {
    let ax = state.get(0, 0);
    let ay = state.get(0, 1);
    let bx = state.get(0, 2);
    let by = state.get(0, 3);
    let tx = state.get(0, 5);
    let ty = state.get(0, 6);

    let to_target = norm2(tx - bx, ty - by);
    if to_target < 1e-9 {
        return Mat::zeros(1, 2);
    }
    let pdx = (tx - bx) / to_target;
    let pdy = (ty - by) / to_target;

    let abx = bx - ax;
    let aby = by - ay;
    let dist_ab = norm2(abx, aby);
    let aligned = if dist_ab > 1e-12 {
        (abx * pdx + aby * pdy) / dist_ab
    } else {
        1.0
    };

    let (gx, gy);
    if dist_ab <= ORBIT_RADIUS && aligned >= 0.9 {
        gx = bx - pdx * PUSH_PRESS;
        gy = by - pdy * PUSH_PRESS;
    } else {
        let wx = bx - pdx * PUSH_STANDOFF;
        let wy = by - pdy * PUSH_STANDOFF;
        if segment_clears_box(ax, ay, wx, wy, bx, by) {
            gx = wx;
            gy = wy;
        } else {
            let (rx, ry) = (-abx / dist_ab, -aby / dist_ab);
            let (t1x, t1y) = (-ry, rx);
            let sign = if (wx - ax) * t1x + (wy - ay) * t1y >= 0.0 {
                1.0
            } else {
                -1.0
            };
            gx = ax + sign * t1x * 0.6 + rx * (ORBIT_RADIUS - dist_ab) * 3.0;
            gy = ay + sign * t1y * 0.6 + ry * (ORBIT_RADIUS - dist_ab) * 3.0;
        }
    }
    Mat::from_vec(
        1,
        2,
        alloc::vec![
            clip_unit(REACH_GAIN * (gx - ax)),
            clip_unit(REACH_GAIN * (gy - ay)),
        ],
    )
    .unwrap()
}

fn segment_clears_box(ax: f64, ay: f64, wx: f64, wy: f64, bx: f64, by: f64) -> bool {
    let ex = wx - ax;
    let ey = wy - ay;
    let len_sq = ex * ex + ey * ey;
    let t = if len_sq > 1e-18 {
        (((bx - ax) * ex + (by - ay) * ey) / len_sq).max(0.0).min(1.0)
    } else {
        0.0
    };
    let cx = ax + t * ex;
    let cy = ay + t * ey;
    norm2(bx - cx, by - cy) >= CONTACT_DIST + 0.02
}

/// Stateless scripted pusher.
#[derive(Debug, Clone, Default)]
pub struct PushBoxExpert;

impl Expert for PushBoxExpert {
    fn id(&self) -> &'static str {
        "expert_pushbox"
    }

    fn begin_episode(&mut self, _rng: &mut ChaCha8Rng) {}

    fn act(&self, obs: &Mat) -> Mat {
        expert_pushbox(obs)
    }
}

/// Per-dimension z-score statistics with a repair for degenerate
/// dimensions: any standard deviation below `1e-8` is replaced by 1 so
/// normalization stays a bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Stats {
    pub fn fit(rows: &[&Mat]) -> Result<Self> {
        let dim = match rows.first() {
            Some(m) => m.cols(),
            None => return Err(Error::EmptyDataset),
        };
        let mut mean = alloc::vec![0.0; dim];
        let mut count = 0usize;
        for m in rows {
            for r in 0..m.rows() {
                for (c, acc) in mean.iter_mut().enumerate() {
                    *acc += m.get(r, c);
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        for v in mean.iter_mut() {
            *v /= count as f64;
        }
        let mut var = alloc::vec![0.0; dim];
        for m in rows {
            for r in 0..m.rows() {
                for (c, acc) in var.iter_mut().enumerate() {
                    let d = m.get(r, c) - mean[c];
                    *acc += d * d;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s < 1e-8 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Stats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_cols(&self, m: &Mat) -> Result<()> {
        if m.cols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: m.cols(),
            });
        }
        Ok(())
    }

    pub fn normalize(&self, m: &Mat) -> Result<Mat> {
        self.check_cols(m)?;
        Ok(Mat::from_fn(m.rows(), m.cols(), |r, c| {
            (m.get(r, c) - self.mean[c]) / self.std[c]
        }))
    }

    pub fn denormalize(&self, m: &Mat) -> Result<Mat> {
        self.check_cols(m)?;
        Ok(Mat::from_fn(m.rows(), m.cols(), |r, c| {
            m.get(r, c) * self.std[c] + self.mean[c]
        }))
    }
}

/// One successful demonstration: `observations` and `actions` have one
/// row per step (the observation seen before each action was taken).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub observations: Mat,
    pub actions: Mat,
    /// Seed the environment was reset with, so the episode can be
    /// replayed exactly.
    pub reset_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env_id: String,
    pub expert_id: String,
    pub seed: u64,
    pub noise_level: f64,
}

/// A set of expert episodes with z-score statistics fitted over all steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub episodes: Vec<Episode>,
    pub obs_stats: Stats,
    pub act_stats: Stats,
    pub meta: DatasetMeta,
}

impl DemoDataset {
    /// Total steps across all episodes.
    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.observations.rows()).sum()
    }

    /// Concatenate two datasets from the same environment and expert,
    /// refitting the statistics over the union. The left-hand metadata is
    /// kept.
    pub fn merge(mut self, other: DemoDataset) -> Result<DemoDataset> {
        if self.meta.env_id != other.meta.env_id || self.meta.expert_id != other.meta.expert_id {
            return Err(invalid(alloc::format!(
                "cannot merge datasets from different sources: {}/{} vs {}/{}",
                self.meta.env_id,
                self.meta.expert_id,
                other.meta.env_id,
                other.meta.expert_id
            )));
        }
        self.episodes.extend(other.episodes);
        let obs_refs: Vec<&Mat> = self.episodes.iter().map(|e| &e.observations).collect();
        let act_refs: Vec<&Mat> = self.episodes.iter().map(|e| &e.actions).collect();
        self.obs_stats = Stats::fit(&obs_refs)?;
        self.act_stats = Stats::fit(&act_refs)?;
        Ok(self)
    }
}

/// Roll out the expert `n_episodes` times with per-step Gaussian action
/// jitter of scale `noise_level`. Episodes that fail are dropped and
/// regenerated from the next derived seed, with the total attempt budget
/// capped at twenty per requested episode. Deterministic per seed.
pub fn generate_dataset(
    env: &mut dyn Env,
    expert: &mut dyn Expert,
    n_episodes: usize,
    seed: u64,
    noise_level: f64,
) -> Result<DemoDataset> {
    if n_episodes == 0 {
        return Err(invalid("n_episodes must be at least 1"));
    }
    if !noise_level.is_finite() || noise_level < 0.0 {
        return Err(invalid("noise_level must be finite and non-negative"));
    }

    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();
    let max_attempts = n_episodes * 20;
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut attempt = 0u64;
    while episodes.len() < n_episodes {
        if attempt as usize >= max_attempts {
            return Err(invalid(alloc::format!(
                "expert failed too often: {} successes after {} attempts",
                episodes.len(),
                attempt
            )));
        }
        let reset_seed = crate::rng::derive_seed(seed, attempt);
        attempt += 1;
        let mut ep_rng = rng_from_seed(reset_seed);
        expert.begin_episode(&mut ep_rng);

        let mut obs = env.reset(reset_seed);
        let mut obs_rows: Vec<f64> = Vec::new();
        let mut act_rows: Vec<f64> = Vec::new();
        let mut steps = 0usize;
        let succeeded = loop {
            let mut action = expert.act(&obs);
            if noise_level > 0.0 {
                action =
                    action.map(|v| v + noise_level * standard_normal(&mut ep_rng));
            }
            obs_rows.extend_from_slice(obs.data());
            act_rows.extend_from_slice(action.data());
            steps += 1;
            let out = env.step(&action)?;
            obs = out.obs;
            if out.success {
                break true;
            }
            if out.done {
                break false;
            }
        };
        if succeeded {
            episodes.push(Episode {
                observations: Mat::from_vec(steps, obs_dim, obs_rows)?,
                actions: Mat::from_vec(steps, act_dim, act_rows)?,
                reset_seed,
            });
        }
    }

    let obs_refs: Vec<&Mat> = episodes.iter().map(|e| &e.observations).collect();
    let act_refs: Vec<&Mat> = episodes.iter().map(|e| &e.actions).collect();
    let obs_stats = Stats::fit(&obs_refs)?;
    let act_stats = Stats::fit(&act_refs)?;
    Ok(DemoDataset {
        episodes,
        obs_stats,
        act_stats,
        meta: DatasetMeta {
            env_id: String::from(env.id()),
            expert_id: String::from(expert.id()),
            seed,
            noise_level,
        },
    })
}

/// Chunk horizons: `t_o` observed steps, `t_p` predicted action steps,
/// `t_a` executed action steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizons {
    pub t_o: usize,
    pub t_p: usize,
    pub t_a: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons {
            t_o: 2,
            t_p: 16,
            t_a: 8,
        }
    }
}

impl Horizons {
    pub fn validate(&self) -> Result<()> {
        if self.t_o == 0 || self.t_p == 0 || self.t_a == 0 {
            return Err(invalid("horizons must be positive"));
        }
        if self.t_a > self.t_p {
            return Err(invalid(alloc::format!(
                "t_a must not exceed t_p, got t_a={} t_p={}",
                self.t_a,
                self.t_p
            )));
        }
        Ok(())
    }
}

/// Chunks from [`chunk_episodes`] plus the number of episodes that were
/// too short to slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    pub chunks: Vec<ChunkPair>,
    pub skipped_episodes: usize,
}

/// Slice every episode into dense per-step chunks in normalized
/// coordinates, ordered by (episode, time). The observation window ending
/// at step `t` is left-padded with the first observation near the episode
/// start; the action window starting at `t` is right-padded with the last
/// action near the end. Episodes shorter than `t_p` are skipped and
/// counted.
pub fn chunk_episodes(ds: &DemoDataset, h: Horizons) -> Result<ChunkSet> {
    h.validate()?;
    if ds.episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut chunks = Vec::new();
    let mut skipped = 0usize;
    for ep in &ds.episodes {
        let len = ep.observations.rows();
        if len < h.t_p {
            skipped += 1;
            continue;
        }
        let obs = ds.obs_stats.normalize(&ep.observations)?;
        let act = ds.act_stats.normalize(&ep.actions)?;
        for t in 0..len {
            let o = Mat::from_fn(h.t_o, obs.cols(), |r, c| {
                let src = (t + r + 1).saturating_sub(h.t_o).min(t);
                obs.get(src, c)
            });
            let a = Mat::from_fn(h.t_p, act.cols(), |r, c| {
                let src = (t + r).min(len - 1);
                act.get(src, c)
            });
            chunks.push(ChunkPair { obs: o, act: a });
        }
    }
    Ok(ChunkSet {
        chunks,
        skipped_episodes: skipped,
    })
}
