use std::path::PathBuf;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("scene generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("point ({x:.3}, {y:.3}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("point ({x:.3}, {y:.3}) is not navigable")]
    NotNavigable { x: f64, y: f64 },

    #[error("points are not connected")]
    Disconnected,

    #[error("sampling failed: {0}")]
    SamplingFailed(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("episode is already finished")]
    EpisodeDone,

    #[error("backward called without a recorded forward trace")]
    MissingTrace,

    #[error("non-finite loss encountered; update aborted")]
    NonFiniteLoss,

    #[error("worker {worker} failed: {reason}")]
    WorkerFailed { worker: usize, reason: String },

    #[error("checkpoint config hash mismatch: expected {expected:016x}, found {found:016x}")]
    ConfigMismatch { expected: u64, found: u64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("nothing found in {0}")]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
