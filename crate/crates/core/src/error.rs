use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HicovError>;

#[derive(Debug, Error)]
pub enum HicovError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("residual block {block} is not positive semidefinite (rho_gamma = {rho_gamma}, block size {size})")]
    NotPsd {
        block: usize,
        size: usize,
        rho_gamma: f64,
    },

    #[error("index out of range: {index} (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("critical values are not monotone: step {step} faced {later} after {earlier}")]
    NonMonotone {
        step: usize,
        earlier: f64,
        later: f64,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: column `{name}` not found; available columns: {available}")]
    MissingColumn {
        path: PathBuf,
        name: String,
        available: String,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl HicovError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HicovError::InvalidParameter(msg.into())
    }
}
