use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the kernel/SVC pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {max_diff:e})")]
    Asymmetric { max_diff: f64 },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("effective rank target {target} unreachable for gamma in [{lo:e}, {hi:e}] (reachable {reach_lo}..{reach_hi})")]
    UnreachableTarget {
        target: f64,
        lo: f64,
        hi: f64,
        reach_lo: f64,
        reach_hi: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error in {path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Data { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorClass::Data,
            Error::InvalidInput(_) | Error::Dimension(_) => ErrorClass::Data,
            Error::Asymmetric { .. }
            | Error::NonFinite { .. }
            | Error::Degenerate(_)
            | Error::NoConvergence { .. }
            | Error::UnreachableTarget { .. } => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
