use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ragdp_bench::config::RunConfig;
use ragdp_bench::pipeline::{self, CellSelection};
use ragdp_bench::{BenchError, Result};
use ragdp_core::ragdp::Mode;

#[derive(Parser)]
#[command(
    name = "ragdp-bench",
    about = "Benchmark retrieval-accelerated diffusion policies on 2D control tasks",
    version
)]
struct Cli {
    /// TOML run configuration; without it the built-in default run is used.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run directory for artifacts, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for evaluation, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the expert demonstration dataset.
    GenData,
    /// Train the configured diffusion models over their seed lists.
    Train,
    /// Build the retrieval knowledge base from the dataset.
    BuildDb,
    /// Evaluate the configured sweep grid, or one cell picked by flags.
    Eval {
        /// Evaluate a single sampling method instead of the full grid.
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        /// Leap ratio for the retrieval modes.
        #[arg(long)]
        r: Option<f64>,
        /// Step count for baseline-fast.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Aggregate eval.csv into report.csv, a table, and plots.
    Report,
    /// Run every stage in order, reusing artifacts that still match.
    Sweep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    /// Full-length sampling from pure noise.
    BaselineFull,
    /// Reduced deterministic step count from pure noise.
    BaselineFast,
    /// Retrieval warm start with ancestral denoising.
    RagdpVp,
    /// Retrieval warm start with Euler denoising.
    RagdpVe,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::BaselineFull => Mode::BaselineFull,
            CliMode::BaselineFast => Mode::BaselineFast,
            CliMode::RagdpVp => Mode::RagdpVp,
            CliMode::RagdpVe => Mode::RagdpVe,
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::built_in(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(BenchError::Config("--workers must be at least 1".into()));
        }
        cfg.workers = workers;
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::GenData => pipeline::cmd_gen_data(&cfg, false),
        Command::Train => pipeline::cmd_train(&cfg, false),
        Command::BuildDb => pipeline::cmd_build_db(&cfg, false),
        Command::Eval { mode, r, steps } => {
            let selection = match mode {
                Some(mode) => Some(CellSelection {
                    mode: mode.into(),
                    steps,
                    r,
                }),
                None => {
                    if r.is_some() || steps.is_some() {
                        return Err(BenchError::Config(
                            "--r and --steps only apply together with --mode".into(),
                        ));
                    }
                    None
                }
            };
            pipeline::cmd_eval(&cfg, selection)
        }
        Command::Report => pipeline::cmd_report(&cfg),
        Command::Sweep => pipeline::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
