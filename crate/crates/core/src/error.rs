use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::lp::LpError;

/// Which solve of the estimation pipeline failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Unpenalized (λ = 0) fit that produces the adaptive weights.
    Pilot,
    /// Fit with the adaptive-lasso weights in place.
    Final,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Pilot => f.write_str("pilot"),
            Stage::Final => f.write_str("final"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate covariate `{0}`: zero sample variance")]
    DegenerateCovariate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("solver failure in {stage} stage: {source}")]
    Solver {
        stage: Stage,
        #[source]
        source: LpError,
    },

    #[error("{stage} solve ended with status {status}")]
    NotOptimal { stage: Stage, status: String },

    #[error("input format error in {}: {msg}", path.display())]
    InputFormat { path: PathBuf, msg: String },

    #[error("too many failed windows: {failed} of {total} (limit 5%)")]
    WindowFailures { failed: usize, total: usize },

    #[error("every grid cell failed; first error: {0}")]
    AllCellsFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
