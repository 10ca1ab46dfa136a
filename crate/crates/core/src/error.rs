use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigen solver did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("solver failed to converge within {iterations} iterations: {context}")]
    NonConvergence { iterations: usize, context: String },

    #[error("zero-variance column at index {0}")]
    ZeroVariance(usize),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("duplicate record for ({date}, {asset})")]
    DuplicateKey { date: String, asset: String },

    #[error("dates are not strictly increasing: {0}")]
    NonMonotoneDates(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("data leakage: decision at row {decision_row} consumed row {row}")]
    Leakage { decision_row: usize, row: usize },

    #[error("infeasible sampling span: {0}")]
    InfeasibleSpan(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("missing average-oracle table for n={n}, dt_in={dt_in}")]
    MissingAoTable { n: usize, dt_in: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
