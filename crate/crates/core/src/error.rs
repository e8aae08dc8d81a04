//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by learners, generators, and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains NaN or Inf entries")]
    NonFinite,

    #[error("system is numerically singular (pass lambda > 0 to regularize)")]
    SingularSystem,

    #[error("matrix is not symmetric: max asymmetry {0:.3e}")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("sample counts must be positive")]
    ZeroCount,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} still empty after {retries} resamples")]
    ClassStarvation { class: usize, retries: usize },

    #[error("feature matrix has rank zero; MSI carries no constraint")]
    RankZero,

    #[error(
        "no finite minimizer: gradient norm {grad_norm:.3e} after {iterations} iterations \
         (data may be linearly separable; retry with ridge > 0)"
    )]
    NoFiniteMinimizer { grad_norm: f64, iterations: usize },

    #[error("task {0} has not been learned")]
    UnknownTask(usize),

    #[error("missing message from client {0}")]
    MissingClient(u64),

    #[error("no client has seen any samples; aggregation preferences are undefined")]
    NoClientSamples,

    #[error("loss diverged to {0:.3e}; reduce the learning rate")]
    Divergence(f64),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("learner '{learner}' failed: {message}")]
    LearnerFailure { learner: String, message: String },

    #[error("missing manifest in {0}")]
    MissingManifest(PathBuf),

    #[error("schema version mismatch: expected {expected}, got {got}")]
    SchemaVersionMismatch { expected: u32, got: u32 },

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
