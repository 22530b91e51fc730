//! Stage orchestration. Each CLI subcommand maps to one `cmd_*` function
//! here; `cmd_sweep` chains them all, reusing artifacts on disk when they
//! still match the configuration.
//!
//! Every stage revalidates what it loads: datasets carry a content hash,
//! checkpoints and knowledge bases carry the hash of the dataset they
//! were built from, and all of it is checked against the live
//! configuration. Stale artifacts fail loudly instead of producing
//! subtly wrong numbers.

use std::fs;
use std::path::{Path, PathBuf};

use ragdp_core::envs::{
    chunk_episodes, generate_dataset, ChunkSet, DemoDataset, Expert, PointReachExpert,
    PushBoxExpert,
};
use ragdp_core::kbase::{dataset_hash, KnowledgeBase};
use ragdp_core::nn::{train, Arch, PredictionType, ScoreNet, TrainConfig};
use ragdp_core::nn::ScheduleRef;
use ragdp_core::ragdp::{Mode, Normalization};
use ragdp_core::rng::derive_seed;

use crate::config::{NetConfig, RunConfig, TrainSection};
use crate::files::{
    load_checkpoint, load_dataset, load_kb, save_checkpoint, save_dataset, save_kb, Checkpoint,
    ScheduleSpec,
};
use crate::report::{
    build_report, merge_eval_rows, merge_timing_rows, read_eval_rows, read_timing_rows,
    render_table, report_meta, write_eval_rows, write_report_csv, write_timing_rows,
};
use crate::runner::{build_cells, make_env, run_eval, Cell, LoadedModel, ModelKind};
use crate::svg;
use crate::{BenchError, Result};

/// Artifact layout under one run directory.
pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(root: &Path) -> Paths {
        Paths {
            root: root.to_path_buf(),
        }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.rgdp")
    }

    pub fn checkpoint(&self, kind: ModelKind, seed: u64) -> PathBuf {
        self.root.join(format!("ckpt_{}_s{seed}.rgdp", kind.as_str()))
    }

    pub fn loss_curve(&self, kind: ModelKind, seed: u64) -> PathBuf {
        self.root.join(format!("loss_{}_s{seed}.csv", kind.as_str()))
    }

    pub fn kb(&self) -> PathBuf {
        self.root.join("kb.rgdp")
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.root.join("eval.csv")
    }

    pub fn timing_csv(&self) -> PathBuf {
        self.root.join("timing.csv")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

pub fn make_expert(env: &str) -> Result<Box<dyn Expert>> {
    match env {
        "pointreach2d" => Ok(Box::new(PointReachExpert::new())),
        "pushbox2d" => Ok(Box::new(PushBoxExpert)),
        other => Err(BenchError::Config(format!("unknown env `{other}`"))),
    }
}

fn mismatch(msg: String) -> BenchError {
    BenchError::Mismatch(msg)
}

/// Loads the run's dataset and checks it is the one the configuration
/// describes, so edits to the config cannot silently reuse stale data.
pub fn load_dataset_checked(cfg: &RunConfig, paths: &Paths) -> Result<DemoDataset> {
    let ds = load_dataset(&paths.dataset())?;
    let env = make_env(&cfg.task.env)?;
    let expert = make_expert(&cfg.task.env)?;
    if ds.meta.env_id != env.id()
        || ds.meta.expert_id != expert.id()
        || ds.meta.seed != cfg.dataset.seed
        || ds.meta.noise_level.to_bits() != cfg.dataset.noise.to_bits()
        || ds.episodes.len() != cfg.dataset.episodes
    {
        return Err(mismatch(format!(
            "dataset on disk ({}, {} episodes, seed {}, noise {}) does not match the \
             configuration; re-run gen-data",
            ds.meta.env_id,
            ds.episodes.len(),
            ds.meta.seed,
            ds.meta.noise_level
        )));
    }
    Ok(ds)
}

pub fn cmd_gen_data(cfg: &RunConfig, reuse: bool) -> Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    if reuse && load_dataset_checked(cfg, &paths).is_ok() {
        println!("dataset: reusing {}", paths.dataset().display());
        return Ok(());
    }
    let mut env = make_env(&cfg.task.env)?;
    let mut expert = make_expert(&cfg.task.env)?;
    let ds = generate_dataset(
        env.as_mut(),
        expert.as_mut(),
        cfg.dataset.episodes,
        cfg.dataset.seed,
        cfg.dataset.noise,
    )?;
    save_dataset(&paths.dataset(), &ds)?;
    println!(
        "dataset: {} episodes, {} steps, hash {:016x} -> {}",
        ds.episodes.len(),
        ds.total_steps(),
        dataset_hash(&ds),
        paths.dataset().display()
    );
    Ok(())
}

/// The models a configuration asks for, in a fixed order.
fn configured_models(cfg: &RunConfig) -> Vec<(ModelKind, ScheduleSpec, &NetConfig, &TrainSection)> {
    let mut out = Vec::new();
    if let (Some(m), Some(spec)) = (&cfg.models.vp, cfg.schedule_spec_vp()) {
        out.push((ModelKind::Vp, spec, &m.net, &m.train));
    }
    if let (Some(m), Some(spec)) = (&cfg.models.ve, cfg.schedule_spec_ve()) {
        out.push((ModelKind::Ve, spec, &m.net, &m.train));
    }
    out
}

/// Checks a checkpoint against the configuration and dataset it is about
/// to be used with.
fn check_checkpoint(
    ck: &Checkpoint,
    cfg: &RunConfig,
    spec: ScheduleSpec,
    net_cfg: &NetConfig,
    seed: u64,
    ds_hash: u64,
    what: &Path,
) -> Result<()> {
    let at = what.display();
    if ck.train_seed != seed {
        return Err(mismatch(format!(
            "{at}: trained with seed {}, expected {seed}",
            ck.train_seed
        )));
    }
    if ck.dataset_hash != ds_hash {
        return Err(mismatch(format!(
            "{at}: trained on a different dataset (hash {:016x}, expected {ds_hash:016x}); \
             re-run train",
            ck.dataset_hash
        )));
    }
    if ck.schedule != spec {
        return Err(mismatch(format!(
            "{at}: schedule parameters differ from the configuration; re-run train"
        )));
    }
    let net = &ck.net;
    if net.arch.hidden != net_cfg.hidden
        || net.arch.blocks != net_cfg.blocks
        || net.embed_dim != net_cfg.embed_dim
    {
        return Err(mismatch(format!(
            "{at}: network shape differs from the configuration; re-run train"
        )));
    }
    if net.t_o != cfg.task.t_o || net.t_p != cfg.task.t_p {
        return Err(mismatch(format!(
            "{at}: trained for horizons t_o {} / t_p {}, configuration asks for {} / {}",
            net.t_o, net.t_p, cfg.task.t_o, cfg.task.t_p
        )));
    }
    Ok(())
}

fn train_one(
    cfg: &RunConfig,
    ds: &DemoDataset,
    chunks: &ChunkSet,
    kind: ModelKind,
    spec: ScheduleSpec,
    net_cfg: &NetConfig,
    section: &TrainSection,
    seed: u64,
) -> Result<Checkpoint> {
    let prediction = match kind {
        ModelKind::Vp => PredictionType::Epsilon,
        ModelKind::Ve => PredictionType::Sample,
    };
    // The initializer gets its own stream so changing the data order of
    // training never changes the starting point.
    let net_seed = derive_seed(seed, 1 + kind as u64);
    let mut net = ScoreNet::new(
        Arch {
            hidden: net_cfg.hidden,
            blocks: net_cfg.blocks,
        },
        prediction,
        ds.obs_stats.dim(),
        ds.act_stats.dim(),
        cfg.task.t_o,
        cfg.task.t_p,
        net_cfg.embed_dim,
        net_seed,
    )?;
    let train_cfg = TrainConfig {
        epochs: section.epochs,
        batch_size: section.batch_size,
        learning_rate: section.learning_rate,
        rng_seed: seed,
        ..TrainConfig::default()
    };
    let vp_schedule;
    let ve_schedule;
    let schedule = match spec {
        ScheduleSpec::Vp { .. } => {
            vp_schedule = spec.build_vp()?;
            ScheduleRef::Vp(&vp_schedule)
        }
        ScheduleSpec::Ve { .. } => {
            ve_schedule = spec.build_ve()?;
            ScheduleRef::Ve(&ve_schedule)
        }
    };
    let report = train(&mut net, &chunks.chunks, schedule, &train_cfg)?;
    Ok(Checkpoint {
        net,
        schedule: spec,
        norm: Normalization {
            obs: ds.obs_stats.clone(),
            act: ds.act_stats.clone(),
        },
        dataset_hash: dataset_hash(ds),
        train_seed: seed,
        loss_curve: report.loss_curve,
    })
}

fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| BenchError::Runtime(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["epoch", "loss"])
        .map_err(|e| BenchError::Runtime(format!("{}: {e}", path.display())))?;
    for (i, loss) in curve.iter().enumerate() {
        writer
            .write_record([(i + 1).to_string(), format!("{loss}")])
            .map_err(|e| BenchError::Runtime(format!("{}: {e}", path.display())))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, reuse: bool) -> Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let ds = load_dataset_checked(cfg, &paths)?;
    let ds_hash = dataset_hash(&ds);
    let chunks = chunk_episodes(&ds, cfg.task.horizons())?;
    println!(
        "training data: {} chunks from {} episodes ({} skipped as too short)",
        chunks.chunks.len(),
        ds.episodes.len(),
        chunks.skipped_episodes
    );
    for (kind, spec, net_cfg, section) in configured_models(cfg) {
        for &seed in &section.seeds {
            let path = paths.checkpoint(kind, seed);
            if reuse {
                if let Ok(ck) = load_checkpoint(&path) {
                    if check_checkpoint(&ck, cfg, spec, net_cfg, seed, ds_hash, &path).is_ok() {
                        println!("{} seed {seed}: reusing {}", kind.as_str(), path.display());
                        continue;
                    }
                }
            }
            let ck = train_one(cfg, &ds, &chunks, kind, spec, net_cfg, section, seed)?;
            save_checkpoint(&path, &ck)?;
            write_loss_csv(&paths.loss_curve(kind, seed), &ck.loss_curve)?;
            let first = ck.loss_curve.first().copied().unwrap_or(f64::NAN);
            let last = ck.loss_curve.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} seed {seed}: {} epochs, loss {first:.4} -> {last:.4}, saved {}",
                kind.as_str(),
                ck.loss_curve.len(),
                path.display()
            );
        }
    }
    Ok(())
}

fn check_kb(kb: &KnowledgeBase, cfg: &RunConfig, ds_hash: u64) -> Result<()> {
    if kb.meta.dataset_hash != ds_hash {
        return Err(mismatch(format!(
            "knowledge base was built from a different dataset (hash {:016x}, expected \
             {ds_hash:016x}); re-run build-db",
            kb.meta.dataset_hash
        )));
    }
    if kb.meta.t_o != cfg.task.t_o || kb.meta.t_p != cfg.task.t_p {
        return Err(mismatch(format!(
            "knowledge base horizons (t_o {}, t_p {}) disagree with the configuration \
             (t_o {}, t_p {}); re-run build-db",
            kb.meta.t_o, kb.meta.t_p, cfg.task.t_o, cfg.task.t_p
        )));
    }
    Ok(())
}

pub fn cmd_build_db(cfg: &RunConfig, reuse: bool) -> Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let ds = load_dataset_checked(cfg, &paths)?;
    let ds_hash = dataset_hash(&ds);
    if reuse {
        if let Ok(kb) = load_kb(&paths.kb()) {
            if check_kb(&kb, cfg, ds_hash).is_ok() {
                println!("knowledge base: reusing {}", paths.kb().display());
                return Ok(());
            }
        }
    }
    let kb = KnowledgeBase::build(&ds, cfg.task.horizons())?;
    save_kb(&paths.kb(), &kb)?;
    println!(
        "knowledge base: {} entries, key dim {}, {} episodes skipped -> {}",
        kb.len(),
        kb.key_dim(),
        kb.meta.skipped_episodes,
        paths.kb().display()
    );
    Ok(())
}

/// A single cell picked on the command line instead of the full sweep.
#[derive(Debug, Clone, Copy)]
pub struct CellSelection {
    pub mode: Mode,
    pub steps: Option<usize>,
    pub r: Option<f64>,
}

/// Expands the selection (or, without one, the configured sweep grids)
/// into concrete cells, validating the flags against the configuration.
pub fn selected_cells(cfg: &RunConfig, selection: Option<CellSelection>) -> Result<Vec<Cell>> {
    let sel = match selection {
        None => {
            let mut cells = Vec::new();
            if let Some(grid) = cfg.sweep_grid_vp() {
                cells.extend(build_cells(ModelKind::Vp, &grid));
            }
            if let Some(grid) = cfg.sweep_grid_ve() {
                cells.extend(build_cells(ModelKind::Ve, &grid));
            }
            return Ok(cells);
        }
        Some(sel) => sel,
    };

    let mut kinds = Vec::new();
    if cfg.models.vp.is_some() {
        kinds.push((ModelKind::Vp, cfg.models.vp.as_ref().map(|m| m.t).unwrap()));
    }
    if cfg.models.ve.is_some() {
        kinds.push((ModelKind::Ve, cfg.models.ve.as_ref().map(|m| m.t).unwrap()));
    }

    let need_r = || -> Result<f64> {
        let r = sel
            .r
            .ok_or_else(|| BenchError::Config("this mode needs --r".to_string()))?;
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(BenchError::Config(format!(
                "leap ratio must lie in [0, 1], got {r}"
            )));
        }
        Ok(r)
    };

    let cells = match sel.mode {
        Mode::BaselineFull => kinds
            .iter()
            .map(|&(k, _)| Cell::baseline_full(k))
            .collect::<Vec<_>>(),
        Mode::BaselineFast => {
            let steps = sel
                .steps
                .ok_or_else(|| BenchError::Config("baseline-fast needs --steps".to_string()))?;
            for &(k, t) in &kinds {
                if steps == 0 || steps > t {
                    return Err(BenchError::Config(format!(
                        "--steps must lie in 1..={t} for the {} model, got {steps}",
                        k.as_str()
                    )));
                }
            }
            kinds
                .iter()
                .map(|&(k, _)| Cell::baseline_fast(k, steps))
                .collect()
        }
        Mode::RagdpVp => {
            if cfg.models.vp.is_none() {
                return Err(BenchError::Config(
                    "ragdp-vp needs a [models.vp] section".to_string(),
                ));
            }
            vec![Cell::ragdp(ModelKind::Vp, need_r()?)]
        }
        Mode::RagdpVe => {
            if cfg.models.ve.is_none() {
                return Err(BenchError::Config(
                    "ragdp-ve needs a [models.ve] section".to_string(),
                ));
            }
            let r = need_r()?;
            if r >= 1.0 {
                return Err(BenchError::Config(
                    "ragdp-ve requires r < 1; the Euler warm start has no replay branch"
                        .to_string(),
                ));
            }
            vec![Cell::ragdp(ModelKind::Ve, r)]
        }
    };
    Ok(cells)
}

fn load_models_for(
    cfg: &RunConfig,
    paths: &Paths,
    kinds: &[ModelKind],
    ds_hash: u64,
) -> Result<Vec<LoadedModel>> {
    let mut models = Vec::new();
    for (kind, spec, net_cfg, section) in configured_models(cfg) {
        if !kinds.contains(&kind) {
            continue;
        }
        for &seed in &section.seeds {
            let path = paths.checkpoint(kind, seed);
            let ck = load_checkpoint(&path)?;
            check_checkpoint(&ck, cfg, spec, net_cfg, seed, ds_hash, &path)?;
            models.push(LoadedModel::new(ck)?);
        }
    }
    Ok(models)
}

pub fn cmd_eval(cfg: &RunConfig, selection: Option<CellSelection>) -> Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let ds = load_dataset_checked(cfg, &paths)?;
    let ds_hash = dataset_hash(&ds);

    let eval_seeds = cfg.eval.seed_start..cfg.eval.seed_start + cfg.eval.episodes as u64;
    if let Some(ep) = ds.episodes.iter().find(|e| eval_seeds.contains(&e.reset_seed)) {
        return Err(mismatch(format!(
            "evaluation seed {} also produced a training episode; shift eval.seed_start",
            ep.reset_seed
        )));
    }

    let cells = selected_cells(cfg, selection)?;
    if cells.is_empty() {
        return Err(BenchError::Config(
            "nothing to evaluate: no models configured".to_string(),
        ));
    }
    let mut kinds: Vec<ModelKind> = Vec::new();
    for cell in &cells {
        if !kinds.contains(&cell.kind) {
            kinds.push(cell.kind);
        }
    }
    let models = load_models_for(cfg, &paths, &kinds, ds_hash)?;

    let needs_kb = cells
        .iter()
        .any(|c| matches!(c.mode, Mode::RagdpVp | Mode::RagdpVe));
    let kb = if needs_kb {
        let kb = load_kb(&paths.kb())?;
        check_kb(&kb, cfg, ds_hash)?;
        Some(kb)
    } else {
        None
    };

    let outcome = run_eval(cfg, &models, kb.as_ref(), &cells)?;

    let eval_path = paths.eval_csv();
    let merged = merge_eval_rows(read_eval_rows(&eval_path)?, outcome.rows.clone());
    write_eval_rows(&eval_path, &merged)?;
    let timing_path = paths.timing_csv();
    let timing = merge_timing_rows(read_timing_rows(&timing_path)?, outcome.timing);
    write_timing_rows(&timing_path, &timing)?;

    println!(
        "evaluated {} cells x {} episodes each -> {}",
        outcome.rows.len(),
        cfg.eval.episodes,
        eval_path.display()
    );
    for row in &outcome.rows {
        println!(
            "  {:4} {:20} seed {}: success {:.3} ({}/{} episodes{})",
            row.kind,
            row.method,
            row.train_seed,
            row.success_rate,
            row.successes,
            row.episodes - row.invalid,
            if row.invalid > 0 {
                format!(", {} invalid", row.invalid)
            } else {
                String::new()
            }
        );
    }
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out_dir);
    let rows = read_eval_rows(&paths.eval_csv())?;
    let report = build_report(&rows)?;
    write_report_csv(&paths.report_csv(), &report_meta(), &report)?;
    print!("{}", render_table(&report));
    println!("report -> {}", paths.report_csv().display());

    let plots = paths.plots_dir();
    fs::create_dir_all(&plots)?;
    for kind in ["vp", "ve"] {
        if !report.iter().any(|r| r.kind == kind) {
            continue;
        }
        match svg::steps_figure(kind, &report) {
            Some(figure) => {
                let path = plots.join(format!("steps_vs_success_{kind}.svg"));
                fs::write(&path, figure)?;
                println!("plot -> {}", path.display());
            }
            None => println!("plot skipped for {kind}: only one method evaluated"),
        }
    }
    let timing = read_timing_rows(&paths.timing_csv())?;
    match svg::timing_figure(&report, &timing) {
        Some(figure) => {
            let path = plots.join("speed_vs_success.svg");
            fs::write(&path, figure)?;
            println!("plot -> {}", path.display());
        }
        None => println!("plot skipped: fewer than two methods carry timing data"),
    }
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    cmd_gen_data(cfg, true)?;
    cmd_train(cfg, true)?;
    cmd_build_db(cfg, true)?;
    cmd_eval(cfg, None)?;
    cmd_report(cfg)
}
