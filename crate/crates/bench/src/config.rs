//! The single TOML document that drives every stage of a run. Unknown
//! keys are rejected so a typo cannot silently fall back to a default,
//! and every stochastic stage has an explicit seed.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ragdp_core::envs::Horizons;

use crate::files::ScheduleSpec;
use crate::{BenchError, Result};

fn bad(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    pub task: TaskConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub models: Models,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub env: String,
    #[serde(default = "default_t_o")]
    pub t_o: usize,
    #[serde(default = "default_t_p")]
    pub t_p: usize,
    #[serde(default = "default_t_a")]
    pub t_a: usize,
}

impl TaskConfig {
    pub fn horizons(&self) -> Horizons {
        Horizons {
            t_o: self.t_o,
            t_p: self.t_p,
            t_a: self.t_a,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_dataset_seed")]
    pub seed: u64,
    #[serde(default)]
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            episodes: default_episodes(),
            seed: default_dataset_seed(),
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct Models {
    pub vp: Option<VpModelConfig>,
    pub ve: Option<VeModelConfig>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VpModelConfig {
    #[serde(default = "default_vp_t")]
    pub t: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub train: TrainSection,
}

impl Default for VpModelConfig {
    fn default() -> Self {
        VpModelConfig {
            t: default_vp_t(),
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
            net: NetConfig::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VeModelConfig {
    #[serde(default = "default_ve_t")]
    pub t: usize,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub train: TrainSection,
}

impl Default for VeModelConfig {
    fn default() -> Self {
        VeModelConfig {
            t: default_ve_t(),
            sigma_min: default_sigma_min(),
            sigma_max: default_sigma_max(),
            rho: default_rho(),
            net: NetConfig::default(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: default_hidden(),
            blocks: default_blocks(),
            embed_dim: default_embed_dim(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_train_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            seeds: default_train_seeds(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// First environment seed; evaluation uses `seed_start..seed_start+episodes`.
    #[serde(default = "default_eval_seed_start")]
    pub seed_start: u64,
    #[serde(default = "default_eval_episodes")]
    pub episodes: usize,
    /// Base seed for the policy's own noise draws.
    #[serde(default = "default_policy_seed")]
    pub policy_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed_start: default_eval_seed_start(),
            episodes: default_eval_episodes(),
            policy_seed: default_policy_seed(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub vp: Option<SweepGrid>,
    #[serde(default)]
    pub ve: Option<SweepGrid>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub fast_steps: Vec<usize>,
    #[serde(default)]
    pub r: Vec<f64>,
}

/// The step grid of the paper's recovery table: reduced-step baselines at
/// 25/10/5 steps and leap ratios whose budgets match them exactly.
pub fn default_vp_grid() -> SweepGrid {
    SweepGrid {
        fast_steps: vec![25, 10, 5],
        r: vec![0.75, 0.9, 0.95],
    }
}

/// Matched-budget grid for the Euler model: leap ratios covering the
/// sweep range with reduced-step baselines at the same budgets.
pub fn default_ve_grid() -> SweepGrid {
    SweepGrid {
        fast_steps: vec![20, 10, 5, 2],
        r: vec![0.5, 0.75, 0.875, 0.95],
    }
}

impl RunConfig {
    /// The evaluation protocol used when no config file is given:
    /// PointReach2D, 200 demos, both model kinds, 3 training seeds and
    /// 56 evaluation seeds.
    pub fn built_in() -> RunConfig {
        let cfg = RunConfig {
            out_dir: default_out_dir(),
            workers: 1,
            task: TaskConfig {
                env: "pointreach2d".to_string(),
                t_o: default_t_o(),
                t_p: default_t_p(),
                t_a: default_t_a(),
            },
            dataset: DatasetConfig::default(),
            models: Models {
                vp: Some(VpModelConfig::default()),
                ve: Some(VeModelConfig::default()),
            },
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        };
        cfg.validate().expect("built-in config validates");
        cfg
    }

    /// The grid evaluated for the VP model: the explicit `[sweep.vp]`
    /// section, or the paper grid when the model is configured but the
    /// section is absent.
    pub fn sweep_grid_vp(&self) -> Option<SweepGrid> {
        match (&self.models.vp, &self.sweep.vp) {
            (Some(_), Some(grid)) => Some(grid.clone()),
            (Some(_), None) => Some(default_vp_grid()),
            (None, _) => None,
        }
    }

    /// Same resolution for the VE model.
    pub fn sweep_grid_ve(&self) -> Option<SweepGrid> {
        match (&self.models.ve, &self.sweep.ve) {
            (Some(_), Some(grid)) => Some(grid.clone()),
            (Some(_), None) => Some(default_ve_grid()),
            (None, _) => None,
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(bad("workers must be at least 1"));
        }
        if !matches!(self.task.env.as_str(), "pointreach2d" | "pushbox2d") {
            return Err(bad(format!(
                "unknown env `{}` (expected pointreach2d or pushbox2d)",
                self.task.env
            )));
        }
        self.task
            .horizons()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        if self.dataset.episodes == 0 {
            return Err(bad("dataset.episodes must be at least 1"));
        }
        if !self.dataset.noise.is_finite() || self.dataset.noise < 0.0 {
            return Err(bad("dataset.noise must be finite and non-negative"));
        }
        if self.models.vp.is_none() && self.models.ve.is_none() {
            return Err(bad("at least one of models.vp / models.ve is required"));
        }

        if let Some(vp) = &self.models.vp {
            // Building the schedule validates the parameters.
            ScheduleSpec::Vp {
                t: vp.t,
                beta_start: vp.beta_start,
                beta_end: vp.beta_end,
            }
            .build_vp()
            .map_err(|e| bad(format!("models.vp: {e}")))?;
            validate_net(&vp.net, "models.vp")?;
            validate_train(&vp.train, "models.vp")?;
        }
        if let Some(ve) = &self.models.ve {
            ScheduleSpec::Ve {
                t: ve.t,
                sigma_min: ve.sigma_min,
                sigma_max: ve.sigma_max,
                rho: ve.rho,
            }
            .build_ve()
            .map_err(|e| bad(format!("models.ve: {e}")))?;
            validate_net(&ve.net, "models.ve")?;
            validate_train(&ve.train, "models.ve")?;
        }

        if self.eval.episodes == 0 {
            return Err(bad("eval.episodes must be at least 1"));
        }

        if let Some(grid) = &self.sweep.vp {
            let t = self
                .models
                .vp
                .as_ref()
                .ok_or_else(|| bad("sweep.vp needs models.vp"))?
                .t;
            validate_grid(grid, t, "sweep.vp", false)?;
        }
        if let Some(grid) = &self.sweep.ve {
            let t = self
                .models
                .ve
                .as_ref()
                .ok_or_else(|| bad("sweep.ve needs models.ve"))?
                .t;
            validate_grid(grid, t, "sweep.ve", true)?;
        }
        Ok(())
    }

    pub fn schedule_spec_vp(&self) -> Option<ScheduleSpec> {
        self.models.vp.as_ref().map(|m| ScheduleSpec::Vp {
            t: m.t,
            beta_start: m.beta_start,
            beta_end: m.beta_end,
        })
    }

    pub fn schedule_spec_ve(&self) -> Option<ScheduleSpec> {
        self.models.ve.as_ref().map(|m| ScheduleSpec::Ve {
            t: m.t,
            sigma_min: m.sigma_min,
            sigma_max: m.sigma_max,
            rho: m.rho,
        })
    }
}

fn validate_net(net: &NetConfig, at: &str) -> Result<()> {
    if net.hidden == 0 || net.blocks == 0 {
        return Err(bad(format!("{at}.net: hidden and blocks must be positive")));
    }
    if net.embed_dim < 2 || net.embed_dim % 2 != 0 {
        return Err(bad(format!("{at}.net: embed_dim must be even and >= 2")));
    }
    Ok(())
}

fn validate_train(train: &TrainSection, at: &str) -> Result<()> {
    if train.epochs == 0 || train.batch_size == 0 {
        return Err(bad(format!(
            "{at}.train: epochs and batch_size must be positive"
        )));
    }
    if !(train.learning_rate > 0.0 && train.learning_rate.is_finite()) {
        return Err(bad(format!("{at}.train: learning_rate must be positive")));
    }
    if train.seeds.is_empty() {
        return Err(bad(format!("{at}.train: seeds must not be empty")));
    }
    let mut sorted = train.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != train.seeds.len() {
        return Err(bad(format!("{at}.train: seeds must be distinct")));
    }
    Ok(())
}

fn validate_grid(grid: &SweepGrid, t: usize, at: &str, is_ve: bool) -> Result<()> {
    for &s in &grid.fast_steps {
        if s == 0 || s > t {
            return Err(bad(format!(
                "{at}.fast_steps: {s} is outside 1..={t}"
            )));
        }
    }
    for &r in &grid.r {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(bad(format!("{at}.r: {r} is outside [0, 1]")));
        }
        if is_ve && r >= 1.0 {
            return Err(bad(format!(
                "{at}.r: the Euler warm start has no replay branch, r must be < 1"
            )));
        }
    }
    Ok(())
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/ragdp")
}
fn one() -> usize {
    1
}
fn default_t_o() -> usize {
    2
}
fn default_t_p() -> usize {
    16
}
fn default_t_a() -> usize {
    8
}
fn default_episodes() -> usize {
    200
}
fn default_dataset_seed() -> u64 {
    7
}
fn default_vp_t() -> usize {
    100
}
fn default_beta_start() -> f64 {
    1e-3
}
fn default_beta_end() -> f64 {
    0.2
}
fn default_ve_t() -> usize {
    40
}
fn default_sigma_min() -> f64 {
    0.002
}
fn default_sigma_max() -> f64 {
    80.0
}
fn default_rho() -> f64 {
    7.0
}
fn default_hidden() -> usize {
    128
}
fn default_blocks() -> usize {
    2
}
fn default_embed_dim() -> usize {
    16
}
fn default_epochs() -> usize {
    40
}
fn default_batch_size() -> usize {
    256
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_train_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_eval_seed_start() -> u64 {
    1000
}
fn default_eval_episodes() -> usize {
    56
}
fn default_policy_seed() -> u64 {
    500
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_fills_the_protocol_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[task]\nenv = \"pointreach2d\"\n[models.vp]\n",
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.episodes, 200);
        assert_eq!(cfg.eval.episodes, 56);
        let vp = cfg.models.vp.unwrap();
        assert_eq!(vp.t, 100);
        assert_eq!(vp.train.seeds, vec![0, 1, 2]);
        assert!(cfg.models.ve.is_none());
    }

    #[test]
    fn built_in_config_has_both_model_kinds() {
        let cfg = RunConfig::built_in();
        assert!(cfg.models.vp.is_some());
        assert!(cfg.models.ve.is_some());
        assert_eq!(cfg.models.ve.as_ref().unwrap().t, 40);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>(
            "[task]\nenv = \"pointreach2d\"\ncolour = \"blue\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");

        let err = toml::from_str::<RunConfig>(
            "[task]\nenv = \"pointreach2d\"\n[models.vp.train]\nlr = 0.1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("lr"), "{err}");
    }

    #[test]
    fn validation_catches_bad_values() {
        let check = |doc: &str, needle: &str| {
            let cfg: RunConfig = toml::from_str(doc).unwrap();
            let err = cfg.validate().unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains(needle), "{err}");
        };
        check("[task]\nenv = \"marscrawler\"\n[models.vp]\n", "unknown env");
        check(
            "[task]\nenv = \"pointreach2d\"\n",
            "at least one of models.vp / models.ve",
        );
        check(
            "[task]\nenv = \"pointreach2d\"\n[models.vp]\nbeta_start = 0.0\n",
            "models.vp",
        );
        check(
            "[task]\nenv = \"pointreach2d\"\n[models.vp]\n[sweep.vp]\nfast_steps = [200]\n",
            "outside 1..=100",
        );
        check(
            "[task]\nenv = \"pointreach2d\"\n[models.ve]\n[sweep.ve]\nr = [1.0]\n",
            "no replay branch",
        );
        check(
            "[task]\nenv = \"pointreach2d\"\n[models.vp]\n[models.vp.train]\nseeds = [1, 1]\n",
            "distinct",
        );
        check(
            "[task]\nenv = \"pointreach2d\"\n[models.ve]\n[sweep.vp]\nr = [0.5]\n",
            "sweep.vp needs models.vp",
        );
    }

    #[test]
    fn sweep_defaults_match_the_paper_grids() {
        let cfg = RunConfig::built_in();
        let vp = cfg.sweep_grid_vp().unwrap();
        assert_eq!(vp.fast_steps, vec![25, 10, 5]);
        assert_eq!(vp.r, vec![0.75, 0.9, 0.95]);
        let ve = cfg.sweep_grid_ve().unwrap();
        assert_eq!(ve.r, vec![0.5, 0.75, 0.875, 0.95]);

        let vp_only: RunConfig =
            toml::from_str("[task]\nenv = \"pointreach2d\"\n[models.vp]\n").unwrap();
        vp_only.validate().unwrap();
        assert!(vp_only.sweep_grid_vp().is_some());
        assert!(vp_only.sweep_grid_ve().is_none());

        let explicit: RunConfig = toml::from_str(
            "[task]\nenv = \"pointreach2d\"\n[models.vp]\n[sweep.vp]\nr = [0.9]\n",
        )
        .unwrap();
        assert_eq!(explicit.sweep_grid_vp().unwrap().r, vec![0.9]);
        assert!(explicit.sweep_grid_vp().unwrap().fast_steps.is_empty());
    }
}
