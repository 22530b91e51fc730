//! Save/load for the three artifact kinds, all carried by
//! [`Container`](crate::container::Container): demonstration datasets,
//! trained-model checkpoints, and knowledge bases.
//!
//! Checkpoints store parameters as little-endian `f32`; loading widens
//! them back to `f64`, so a save/load/save trip is byte-stable. Every
//! artifact records the hash of the dataset it came from, and the eval
//! stage refuses to combine artifacts whose hashes disagree.

use std::path::Path;

use ragdp_core::envs::{DatasetMeta, DemoDataset, Episode, Stats};
use ragdp_core::kbase::{dataset_hash, Embedder, KbMeta, KnowledgeBase};
use ragdp_core::nn::{Arch, PredictionType, ScoreNet};
use ragdp_core::ragdp::Normalization;
use ragdp_core::schedules::{make_ve_schedule, make_vp_schedule, VeSchedule, VpSchedule};
use ragdp_core::tensor::Mat;

use crate::container::{BlockData, Container};
use crate::{BenchError, Result};

fn corrupt(path: &Path, msg: impl Into<String>) -> BenchError {
    BenchError::Runtime(format!("{}: {}", path.display(), msg.into()))
}

// ---------------------------------------------------------------------
// Dataset files

pub fn save_dataset(path: &Path, ds: &DemoDataset) -> Result<()> {
    let mut c = Container::new("dataset");
    c.push_field("env", &ds.meta.env_id);
    c.push_field("expert", &ds.meta.expert_id);
    c.push_field("seed", ds.meta.seed);
    c.push_field("noise", format_f64(ds.meta.noise_level));
    c.push_field("episodes", ds.episodes.len());
    c.push_field("obs_dim", ds.obs_stats.dim());
    c.push_field("act_dim", ds.act_stats.dim());
    c.push_field("content_hash", dataset_hash(ds));

    let mut lens = Vec::new();
    let mut seeds = Vec::new();
    let mut obs = Vec::new();
    let mut act = Vec::new();
    for ep in &ds.episodes {
        lens.push(ep.actions.rows() as u64);
        seeds.push(ep.reset_seed);
        obs.extend_from_slice(ep.observations.data());
        act.extend_from_slice(ep.actions.data());
    }
    c.push_block("episode_len", BlockData::U64(lens));
    c.push_block("reset_seed", BlockData::U64(seeds));
    c.push_block("obs", BlockData::F64(obs));
    c.push_block("act", BlockData::F64(act));
    push_stats(&mut c, "obs_stats", &ds.obs_stats);
    push_stats(&mut c, "act_stats", &ds.act_stats);
    c.save(path)
}

pub fn load_dataset(path: &Path) -> Result<DemoDataset> {
    let c = Container::load_kind(path, "dataset")?;
    let n: usize = c.parse_field("episodes")?;
    let obs_dim: usize = c.parse_field("obs_dim")?;
    let act_dim: usize = c.parse_field("act_dim")?;

    let lens = c.u64s("episode_len")?;
    let seeds = c.u64s("reset_seed")?;
    if lens.len() != n || seeds.len() != n {
        return Err(corrupt(path, "episode count disagrees with the blocks"));
    }
    let obs = c.f64s("obs")?;
    let act = c.f64s("act")?;

    let mut episodes = Vec::with_capacity(n);
    let (mut obs_at, mut act_at) = (0usize, 0usize);
    for i in 0..n {
        let len = lens[i] as usize;
        let obs_end = obs_at + len * obs_dim;
        let act_end = act_at + len * act_dim;
        if obs_end > obs.len() || act_end > act.len() {
            return Err(corrupt(path, "episode blocks are shorter than declared"));
        }
        episodes.push(Episode {
            observations: Mat::from_vec(len, obs_dim, obs[obs_at..obs_end].to_vec())?,
            actions: Mat::from_vec(len, act_dim, act[act_at..act_end].to_vec())?,
            reset_seed: seeds[i],
        });
        obs_at = obs_end;
        act_at = act_end;
    }
    if obs_at != obs.len() || act_at != act.len() {
        return Err(corrupt(path, "episode blocks are longer than declared"));
    }

    let ds = DemoDataset {
        episodes,
        obs_stats: read_stats(&c, path, "obs_stats", obs_dim)?,
        act_stats: read_stats(&c, path, "act_stats", act_dim)?,
        meta: DatasetMeta {
            env_id: c.field("env")?.to_string(),
            expert_id: c.field("expert")?.to_string(),
            seed: c.parse_field("seed")?,
            noise_level: c.parse_field("noise")?,
        },
    };
    let stored: u64 = c.parse_field("content_hash")?;
    if dataset_hash(&ds) != stored {
        return Err(corrupt(path, "content hash disagrees with the episodes"));
    }
    Ok(ds)
}

// ---------------------------------------------------------------------
// Checkpoint files

/// Which diffusion formulation a model was trained under, with enough
/// parameters to rebuild its schedule exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Vp {
        t: usize,
        beta_start: f64,
        beta_end: f64,
    },
    Ve {
        t: usize,
        sigma_min: f64,
        sigma_max: f64,
        rho: f64,
    },
}

impl ScheduleSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ScheduleSpec::Vp { .. } => "vp",
            ScheduleSpec::Ve { .. } => "ve",
        }
    }

    pub fn t(&self) -> usize {
        match self {
            ScheduleSpec::Vp { t, .. } | ScheduleSpec::Ve { t, .. } => *t,
        }
    }

    pub fn build_vp(&self) -> Result<VpSchedule> {
        match *self {
            ScheduleSpec::Vp {
                t,
                beta_start,
                beta_end,
            } => Ok(make_vp_schedule(t, beta_start, beta_end)?),
            ScheduleSpec::Ve { .. } => Err(BenchError::Mismatch(
                "this checkpoint holds a VE model".into(),
            )),
        }
    }

    pub fn build_ve(&self) -> Result<VeSchedule> {
        match *self {
            ScheduleSpec::Ve {
                t,
                sigma_min,
                sigma_max,
                rho,
            } => Ok(make_ve_schedule(t, sigma_min, sigma_max, rho)?),
            ScheduleSpec::Vp { .. } => Err(BenchError::Mismatch(
                "this checkpoint holds a VP model".into(),
            )),
        }
    }
}

/// A trained model plus everything needed to run it: schedule
/// parameters, normalization statistics, provenance, and the loss curve
/// of the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: ScoreNet,
    pub schedule: ScheduleSpec,
    pub norm: Normalization,
    pub dataset_hash: u64,
    pub train_seed: u64,
    pub loss_curve: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut c = Container::new("checkpoint");
    let net = &ck.net;
    c.push_field(
        "prediction",
        match net.prediction {
            PredictionType::Epsilon => "epsilon",
            PredictionType::Sample => "sample",
        },
    );
    c.push_field("hidden", net.arch.hidden);
    c.push_field("blocks", net.arch.blocks);
    c.push_field("embed_dim", net.embed_dim);
    c.push_field("obs_dim", net.obs_dim);
    c.push_field("act_dim", net.act_dim);
    c.push_field("t_o", net.t_o);
    c.push_field("t_p", net.t_p);
    c.push_field("schedule", ck.schedule.kind());
    match ck.schedule {
        ScheduleSpec::Vp {
            t,
            beta_start,
            beta_end,
        } => {
            c.push_field("t", t);
            c.push_field("beta_start", format_f64(beta_start));
            c.push_field("beta_end", format_f64(beta_end));
        }
        ScheduleSpec::Ve {
            t,
            sigma_min,
            sigma_max,
            rho,
        } => {
            c.push_field("t", t);
            c.push_field("sigma_min", format_f64(sigma_min));
            c.push_field("sigma_max", format_f64(sigma_max));
            c.push_field("rho", format_f64(rho));
        }
    }
    c.push_field("dataset_hash", ck.dataset_hash);
    c.push_field("train_seed", ck.train_seed);

    let params: Vec<f32> = net.params.iter().map(|&p| p as f32).collect();
    c.push_block("params", BlockData::F32(params));
    push_stats(&mut c, "obs_stats", &ck.norm.obs);
    push_stats(&mut c, "act_stats", &ck.norm.act);
    c.push_block("loss_curve", BlockData::F64(ck.loss_curve.clone()));
    c.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c = Container::load_kind(path, "checkpoint")?;
    let prediction = match c.field("prediction")? {
        "epsilon" => PredictionType::Epsilon,
        "sample" => PredictionType::Sample,
        other => return Err(corrupt(path, format!("unknown prediction `{other}`"))),
    };
    let arch = Arch {
        hidden: c.parse_field("hidden")?,
        blocks: c.parse_field("blocks")?,
    };
    let (obs_dim, act_dim) = (c.parse_field("obs_dim")?, c.parse_field("act_dim")?);
    let (t_o, t_p) = (c.parse_field("t_o")?, c.parse_field("t_p")?);
    let embed_dim: usize = c.parse_field("embed_dim")?;

    let schedule = match c.field("schedule")? {
        "vp" => ScheduleSpec::Vp {
            t: c.parse_field("t")?,
            beta_start: c.parse_field("beta_start")?,
            beta_end: c.parse_field("beta_end")?,
        },
        "ve" => ScheduleSpec::Ve {
            t: c.parse_field("t")?,
            sigma_min: c.parse_field("sigma_min")?,
            sigma_max: c.parse_field("sigma_max")?,
            rho: c.parse_field("rho")?,
        },
        other => return Err(corrupt(path, format!("unknown schedule `{other}`"))),
    };
    let expected = match schedule {
        ScheduleSpec::Vp { .. } => PredictionType::Epsilon,
        ScheduleSpec::Ve { .. } => PredictionType::Sample,
    };
    if prediction != expected {
        return Err(corrupt(path, "prediction type disagrees with the schedule"));
    }

    let mut net = ScoreNet::new(arch, prediction, obs_dim, act_dim, t_o, t_p, embed_dim, 0)?;
    let params = c.f32s("params")?;
    if params.len() != net.params.len() {
        return Err(corrupt(
            path,
            format!(
                "parameter block holds {} values, the declared shape needs {}",
                params.len(),
                net.params.len()
            ),
        ));
    }
    net.params.clear();
    net.params.extend(params.iter().map(|&p| p as f64));

    Ok(Checkpoint {
        norm: Normalization {
            obs: read_stats(&c, path, "obs_stats", obs_dim)?,
            act: read_stats(&c, path, "act_stats", act_dim)?,
        },
        net,
        schedule,
        dataset_hash: c.parse_field("dataset_hash")?,
        train_seed: c.parse_field("train_seed")?,
        loss_curve: c.f64s("loss_curve")?.to_vec(),
    })
}

// ---------------------------------------------------------------------
// Knowledge-base files

pub fn save_kb(path: &Path, kb: &KnowledgeBase) -> Result<()> {
    let mut c = Container::new("kb");
    c.push_field("task", &kb.meta.task_id);
    c.push_field("t_o", kb.meta.t_o);
    c.push_field("t_p", kb.meta.t_p);
    c.push_field("obs_dim", kb.meta.obs_dim);
    c.push_field("act_dim", kb.meta.act_dim);
    c.push_field("entries", kb.len());
    c.push_field("dataset_hash", kb.meta.dataset_hash);
    c.push_field("skipped_episodes", kb.meta.skipped_episodes);
    c.push_block("embed_mean", BlockData::F64(kb.embedder.mean.clone()));
    c.push_block("embed_std", BlockData::F64(kb.embedder.std.clone()));
    push_stats(&mut c, "act_stats", &kb.act_stats);
    c.push_block("keys", BlockData::F32(kb.keys_flat().to_vec()));
    c.push_block("values", BlockData::F32(kb.values_flat().to_vec()));
    c.save(path)
}

pub fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    let c = Container::load_kind(path, "kb")?;
    let meta = KbMeta {
        task_id: c.field("task")?.to_string(),
        t_o: c.parse_field("t_o")?,
        t_p: c.parse_field("t_p")?,
        obs_dim: c.parse_field("obs_dim")?,
        act_dim: c.parse_field("act_dim")?,
        dataset_hash: c.parse_field("dataset_hash")?,
        skipped_episodes: c.parse_field("skipped_episodes")?,
    };
    let entries: usize = c.parse_field("entries")?;
    let embed_stats = Stats {
        mean: c.f64s("embed_mean")?.to_vec(),
        std: c.f64s("embed_std")?.to_vec(),
    };
    let embedder = Embedder::new(&embed_stats, meta.t_o)?;
    let act_stats = read_stats(&c, path, "act_stats", meta.act_dim)?;
    let kb = KnowledgeBase::from_parts(
        c.f32s("keys")?.to_vec(),
        c.f32s("values")?.to_vec(),
        embedder,
        act_stats,
        meta,
    )?;
    if kb.len() != entries {
        return Err(corrupt(path, "entry count disagrees with the key block"));
    }
    Ok(kb)
}

// ---------------------------------------------------------------------

fn push_stats(c: &mut Container, prefix: &str, stats: &Stats) {
    c.push_block(&format!("{prefix}_mean"), BlockData::F64(stats.mean.clone()));
    c.push_block(&format!("{prefix}_std"), BlockData::F64(stats.std.clone()));
}

fn read_stats(c: &Container, path: &Path, prefix: &str, dim: usize) -> Result<Stats> {
    let stats = Stats {
        mean: c.f64s(&format!("{prefix}_mean"))?.to_vec(),
        std: c.f64s(&format!("{prefix}_std"))?.to_vec(),
    };
    if stats.mean.len() != dim || stats.std.len() != dim {
        return Err(corrupt(path, format!("{prefix} blocks have the wrong width")));
    }
    Ok(stats)
}

/// `f64` to text so that parsing it back gives the identical bits.
fn format_f64(x: f64) -> String {
    let short = format!("{x}");
    if short.parse::<f64>() == Ok(x) {
        short
    } else {
        format!("{x:e}")
    }
}
