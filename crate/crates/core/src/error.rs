use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum DtbmError {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value {value} at flat position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DtbmError> = std::result::Result<T, E>;

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(DtbmError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
