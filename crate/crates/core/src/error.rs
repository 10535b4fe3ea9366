use std::io;

use thiserror::Error;

use crate::ids::FirmId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula (share at a pole,
    /// non-positive price, margin outside (0,1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid input: mismatched lengths, broken adding-up,
    /// inconsistent ownership.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown firm `{0}`")]
    UnknownFirm(FirmId),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A root-finder exhausted its iteration budget.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
