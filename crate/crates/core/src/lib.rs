//! Training-free acceleration for diffusion policies.
//!
//! A diffusion policy spends most of its inference budget denoising from
//! pure noise. When a database of expert trajectories is available, a
//! retrieved action chunk can replace the early denoising work: the chunk
//! is re-noised to an intermediate level and the sampler runs only the
//! remaining steps. The fraction of the schedule that is skipped is the
//! leap ratio `r`.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: a dense row-major `f64` matrix used for action and
//!   observation chunks.
//! * [`rng`]: seeded ChaCha streams and seed derivation for reproducible
//!   parallel workloads.
//! * [`schedules`]: variance-preserving (discrete beta) and
//!   variance-exploding (rho-warped sigma grid) noise schedules.
//! * [`nn`]: a small score network with hand-written gradients and an
//!   Adam training loop.
//! * [`samplers`]: ancestral, few-step deterministic, and sigma-space
//!   Euler samplers with exact model-evaluation accounting.
//! * [`oracle`]: closed-form denoisers for isotropic Gaussian data, used
//!   to validate samplers without training.
//! * [`kbase`]: an exact nearest-neighbour store over normalised
//!   observation embeddings.
//! * [`envs`]: two scripted 2D control tasks and dataset generation.
//! * [`ragdp`]: the retrieval-augmented policy itself, step budgeting,
//!   and receding-horizon rollout.
//!
//! `no_std` with `alloc`; the companion `ragdp-bench` crate carries file
//! formats, the CLI, and wall-clock benchmarking.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod envs;
pub mod kbase;
pub mod nn;
pub mod oracle;
pub mod ragdp;
pub mod rng;
pub mod samplers;
pub mod schedules;
pub mod tensor;

use alloc::string::String;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("step index {tau} out of range for schedule with {t} steps")]
    TauOutOfRange { tau: usize, t: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sampler requires a {expected:?} model, got {got:?}")]
    PredictionMismatch {
        expected: nn::PredictionType,
        got: nn::PredictionType,
    },
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("environment fault: {0}")]
    EnvFault(String),
}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
