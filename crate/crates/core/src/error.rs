use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid modulation: {0}")]
    InvalidModulation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("channel alignment failed to converge (residual {residual:.3e})")]
    AlignmentFailed { residual: f64 },

    #[error("degenerate constellation: {0}")]
    DegenerateConstellation(String),

    #[error("constellation ordering changed under perturbation (epsilon {epsilon})")]
    OrderingChanged { epsilon: f64 },

    #[error("numerical integration did not converge (estimated error {achieved:.3e}, requested {requested:.3e})")]
    Integration { achieved: f64, requested: f64 },

    #[error("BER {value} for user {user} is outside [0, 1]")]
    BerOutOfRange { user: usize, value: f64 },

    #[error("power optimizer diverged after {iterations} iterations: {reason}")]
    OptimizerDiverged { iterations: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
