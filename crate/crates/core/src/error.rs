use thiserror::Error;

use crate::oracle::IntegrationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Adaptive integration hit its recursion limit. The partial result is
    /// still the best available estimate.
    #[error("integration did not converge (partial value {}, error estimate {})", partial.value, partial.error_estimate)]
    NoConvergence { partial: IntegrationResult },

    /// The derivative exists only one-sided at this input.
    #[error("derivative undefined here: {0}")]
    EdgeCase(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
