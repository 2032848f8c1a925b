use thiserror::Error;

#[derive(Debug, Error)]
pub enum NollikError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("numerical underflow: {0}")]
    Underflow(String),

    #[error("unsupported weight kind for {0}")]
    UnsupportedKind(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("invalid controls: {0}")]
    InvalidControls(String),

    #[error("rejection region has numerically zero mass")]
    ZeroMassRegion,

    #[error("z = {z} outside grid range [{lo}, {hi}]")]
    OutOfGrid { z: f64, lo: f64, hi: f64 },

    #[error("H has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NollikError>;

pub(crate) fn invalid(msg: impl Into<String>) -> NollikError {
    NollikError::InvalidParameter(msg.into())
}
