use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{what} must satisfy {requirement}, got {value}")]
    Domain {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The density could not be normalized because its integral diverges.
    #[error("improper density: {0}")]
    ImproperDensity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A hypothesis of the requested operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A result contradicts a theorem the computation relies on.
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, requirement: &'static str, value: f64) -> Self {
        Error::Domain {
            what,
            requirement,
            value,
        }
    }
}

pub(crate) fn require_positive(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::domain(what, "a finite value > 0", value))
    }
}
