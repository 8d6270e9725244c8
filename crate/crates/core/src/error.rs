use thiserror::Error;

/// Errors raised by the numerical core and the experiment runners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid target model: {0}")]
    InvalidModel(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{failed} of {total} paths failed (first: path {first_path}: {first_reason})")]
    PathFailures {
        failed: usize,
        total: usize,
        first_path: usize,
        first_reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
