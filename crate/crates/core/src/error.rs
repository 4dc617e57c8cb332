use thiserror::Error;

/// Errors raised by the thermometry library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no stationary state: smallest eigenvalue magnitude {smallest:e} exceeds tolerance {tolerance:e}")]
    NoStationaryState { smallest: f64, tolerance: f64 },

    #[error("model integrity violated ({check}): {detail}")]
    ModelIntegrity { check: &'static str, detail: String },

    #[error("Kraus operators are not complete: max |sum K^dag K - 1| = {0:e}")]
    KrausCompleteness(f64),

    #[error("estimator undefined at t = {t}: {reason}")]
    EstimatorUndefined { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
