use thiserror::Error;

use crate::lasso::LassoFit;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid size {0}: must be a power of two")]
    InvalidSize(usize),

    #[error("lasso did not converge after {} sweeps (kkt violation {:.3e})", fit.iterations, fit.kkt_violation)]
    NonConvergence { fit: Box<LassoFit> },

    #[error("at least 100 Monte Carlo replicates are required, got {0}")]
    TooFewReplicates(usize),

    #[error("invalid folds: {0}")]
    InvalidFolds(String),

    #[error("degrees of freedom exhausted: k = {k}, n = {n}")]
    DegreesOfFreedomExhausted { k: usize, n: usize },

    #[error("scaled lasso did not converge after {0} alternations")]
    ScaledLassoNonConvergence(usize),

    #[error("noise level collapsed to {0:.3e} (perfect fit)")]
    SigmaCollapse(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
