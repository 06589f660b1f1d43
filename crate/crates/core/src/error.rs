use std::path::PathBuf;

use thiserror::Error;

use crate::genomics::Stage;
use crate::shrinkage::ThetaSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("design matrix is rank deficient (eigenvalue ratio {ratio:.3e} of X'X below 1e-10)")]
    RankDeficient { ratio: f64 },

    #[error("degenerate sample: need n > p, got n = {n}, p = {p}")]
    DegenerateSample { n: usize, p: usize },

    #[error("ill-posed shrinkage problem: {0}")]
    IllPosed(String),

    #[error("box solver did not converge after {} sweeps (KKT residual {:.3e})", .best.iterations, .best.kkt_residual)]
    NoConvergence { best: Box<ThetaSolution> },

    #[error("box bound must be positive, got M = {0}")]
    InvalidBound(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell {0} has zero total count")]
    EmptyCell(usize),

    #[error("expression matrix is at stage {found:?}, operation requires {expected:?}")]
    StageError { expected: Stage, found: Stage },

    #[error("malformed input {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Recover the best iterate from a non-converged box solve.
    pub fn into_best_solution(self) -> Result<ThetaSolution> {
        match self {
            Error::NoConvergence { best } => Ok(*best),
            other => Err(other),
        }
    }
}
