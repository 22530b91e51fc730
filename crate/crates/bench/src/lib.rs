//! Benchmark harness around `ragdp-core`: on-disk formats for datasets,
//! checkpoints, and knowledge bases, a TOML run configuration, an eval
//! runner that sweeps sampling methods over seed grids, and CSV/SVG
//! report emission. The `ragdp-bench` binary is a thin CLI over this
//! library.

pub mod config;
pub mod container;
pub mod files;
pub mod pipeline;
pub mod report;
pub mod runner;
pub mod svg;

use std::fmt;

/// Harness-level failure, split by how the process should exit:
/// configuration problems (exit 2), artifact/config mismatches (exit 3),
/// and everything that goes wrong at runtime (exit 4).
#[derive(Debug)]
pub enum BenchError {
    Config(String),
    Mismatch(String),
    Runtime(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Mismatch(_) => 3,
            BenchError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::Config(m) => write!(f, "config error: {m}"),
            BenchError::Mismatch(m) => write!(f, "mismatch: {m}"),
            BenchError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

impl From<ragdp_core::Error> for BenchError {
    fn from(e: ragdp_core::Error) -> Self {
        BenchError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
