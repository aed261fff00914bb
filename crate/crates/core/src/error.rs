use std::io;

use thiserror::Error;

/// Errors raised across the data-generation and surrogate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-positive eigenvalue {value:e} at index {index} (tensor is not positive definite)")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("invalid deformation: det F = {det:e}")]
    InvalidDeformation { det: f64 },

    #[error("plastic increment {delta_gamma:e} exceeds the sub-step cap {cap:e}")]
    SubstepRequired { delta_gamma: f64, cap: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {d} exceeds the configured cap {cap}; use a snapshot-space decomposition instead")]
    DimensionCap { d: usize, cap: usize },

    #[error("p = {p} is not divisible by Q = {q}")]
    Indivisible { p: usize, q: usize },

    #[error("no sequences in length group {0}")]
    EmptyGroup(usize),

    #[error("training diverged (non-finite loss) at mini-batch {batch}, group {group}")]
    Diverged { batch: usize, group: usize },

    #[error("bundle has no fitted preprocessing; train it first")]
    NotPrepared,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
