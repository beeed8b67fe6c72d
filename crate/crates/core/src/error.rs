use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectral parameter {lambda} is not below the threshold {nu}")]
    ThresholdViolation { nu: f64, lambda: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shift {shift} rejected: pivot {pivot:e} at row {row} is numerically zero")]
    ShiftRejected { shift: f64, row: usize, pivot: f64 },

    #[error("incomplete basis: {requested} eigenpairs requested but {found} lie below the ceiling")]
    IncompleteBasis { requested: usize, found: usize },

    #[error("resolvent at {lambda} is near-singular: {detail}")]
    NearSingular { lambda: f64, detail: String },

    #[error("deflation defect: residual {residual:e} after {iterations} iterations")]
    DeflationDefect { residual: f64, iterations: usize },

    #[error("unstable extraction: plateau deviation {deviation:.3e} exceeds {limit:.3e}")]
    UnstableExtraction { deviation: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("outside the reduction regime: {0}")]
    ReductionRegime(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("depth tuning failed: {0}")]
    TuningFailure(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}
