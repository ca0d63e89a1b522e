use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument outside the domain of the operation.
    Domain { what: &'static str, value: f64 },
    /// A configuration value that violates its invariant.
    InvalidConfig(String),
    /// Vector or layout lengths do not agree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A gradient, loss or statistic became NaN or infinite.
    NonFinite { what: &'static str },
    UnknownEnv(String),
    /// `step` was called on an episode that already ended.
    EpisodeOver,
    /// A training run stopped because a loss or gradient went non-finite.
    Aborted(crate::trainer::Abort),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what} out of domain: {value}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected length {expected}, found {found}"),
            Error::NonFinite { what } => write!(f, "non-finite {what}"),
            Error::UnknownEnv(name) => write!(f, "unknown environment `{name}`"),
            Error::EpisodeOver => write!(f, "step called after the episode ended; reset first"),
            Error::Aborted(abort) => write!(
                f,
                "run aborted at epoch {} minibatch {}: non-finite {} ({})",
                abort.epoch, abort.minibatch, abort.statistic, abort.value
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
