use crate::hypertune::TuneTrace;

/// Errors raised by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear system is singular (factorization failed with jitter up to {jitter:e})")]
    Singular { jitter: f64 },

    #[error("tuning diverged: none of the {} recorded iterates has a finite loss", .0.per_step.len())]
    TuningDiverged(Box<TuneTrace>),

    #[error("degenerate volume: {0}")]
    DegenerateVolume(String),

    #[error("feature exchange protocol error: {0}")]
    Protocol(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
