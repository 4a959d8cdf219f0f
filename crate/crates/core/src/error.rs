use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown channel profile `{name}` (valid: {valid})")]
    UnknownProfile { name: String, valid: String },

    #[error("invalid power-delay profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tap delay {delay_ns} ns exceeds the simulated span of {limit_ns} ns")]
    DelayOutOfModel { delay_ns: f64, limit_ns: f64 },

    #[error("linear solve failed after regularization (condition estimate {condition:.3e})")]
    Solver { condition: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("eigendecomposition residual {0:.3e} above tolerance")]
    EigenResidual(f64),

    #[error("digest mismatch for {}", path.display())]
    Digest { path: PathBuf },

    #[error("format error in {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("missing prediction file {}", .0.display())]
    MissingPredictions(PathBuf),

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
