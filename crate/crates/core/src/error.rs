//! Error taxonomy shared by every module in the crate.
//!
//! Four failure classes cover the whole pipeline: malformed structure
//! (partitions, length mismatches), invalid configuration values, numeric
//! breakdown during evaluation or updates, and out-of-range queries.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or layout violations: partition gaps/overlaps, mismatched
    /// vector lengths, uninitialized optimizer slots.
    #[error("structural error: {0}")]
    Structure(String),

    /// Rejected configuration values: bad clamp bounds, indivisible batch
    /// sizes, empty datasets, invalid schedule parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values produced during evaluation or an update.
    /// `location` names the parameter layer when one can be identified,
    /// otherwise the evaluation stage (e.g. "loss").
    #[error("numeric error at {location}: {message}")]
    Numeric { location: String, message: String },

    /// Out-of-range queries: schedule steps past the horizon, parameter or
    /// sample indices beyond bounds.
    #[error("range error: {0}")]
    Range(String),

    /// Failures while streaming records or artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
}
