use std::io;

use thiserror::Error;

/// Errors surfaced by the simulator, the theory routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A mathematical function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An operation was applied to an object in the wrong lifecycle state.
    #[error("invalid state: {0}")]
    State(String),
    /// A numerical failure (NaN/Inf) during training or iteration.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A persisted artifact could not be decoded.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by caller-supplied values rather than runtime failures.
    pub fn is_parameter_error(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
