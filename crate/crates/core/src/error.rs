use thiserror::Error;

use crate::optim::TraceStep;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the region where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The alternating optimizer hit its iteration cap; the partial trace is kept.
    #[error("alternating optimization stopped at the iteration cap ({iterations})")]
    IterationCap {
        iterations: usize,
        trace: Vec<TraceStep>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for the I/O-class failures (file system, serialization to disk).
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
