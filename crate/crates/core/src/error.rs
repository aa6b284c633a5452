use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("privacy budgets must be non-negative, got {0}")]
    NegativeBudget(f64),

    #[error("mu must be positive, got {0}")]
    NonPositiveMu(f64),

    #[error("known-covariance mode requires a whitener")]
    MissingWhitener,

    #[error("gradient norm {grad_norm:e} still above tolerance after {iterations} iterations")]
    MaxIterExceeded { iterations: usize, grad_norm: f64 },

    #[error("line search failed to find a decreasing step after {0} reductions")]
    LineSearchFailed(usize),

    #[error("covariance matrix is not symmetric positive definite: {0}")]
    InvalidCovariance(String),

    #[error("covariance matrix is singular (eigenvalue {min_eigenvalue:e} vs max {max_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String, value: String },

    #[error("training size {n_train} must be smaller than dataset size {n}")]
    SplitTooLarge { n_train: usize, n: usize },

    #[error("certificate rejected: sigma {sigma} is below the required {required}")]
    InsufficientNoise { sigma: f64, required: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("replication {rep_id}: {source}")]
    Replication {
        rep_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
