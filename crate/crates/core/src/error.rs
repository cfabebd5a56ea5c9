use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation. `key` names the offending parameter.
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },

    #[error("length mismatch: expected {expected} coefficients, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// The physical grid is too coarse to resolve the requested modes.
    #[error("grid of {grid} intervals aliases {modes} modes (need at least {})", 2 * .modes)]
    Aliasing { grid: usize, modes: usize },

    /// A numerical quantity became NaN or infinite.
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("time {t} outside interpolation range [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
}

impl Error {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
