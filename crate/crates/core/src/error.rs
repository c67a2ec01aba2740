use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator and analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a documented precondition (unsorted input, out-of-range time, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A statistic is undefined for the given input, e.g. a ratio with a zero denominator.
    #[error("undefined value: {0}")]
    Undefined(String),

    /// A thermal or Poisson enumeration was cut off before its tail became negligible.
    #[error("truncation at n = {truncation} leaves tail mass {tail:e} above the {limit:e} bound")]
    Truncation {
        truncation: usize,
        tail: f64,
        limit: f64,
    },

    /// A line-oriented text input failed to parse.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// Calibration could not meet the residual threshold.
    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        Error::Undefined(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Checks that `p` is a probability.
pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {p} is not in [0, 1]")))
    }
}

pub(crate) fn check_non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} must be finite and >= 0")))
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} must be finite and > 0")))
    }
}
