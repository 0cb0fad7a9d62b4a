use thiserror::Error;

use crate::funcspace::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{label}: x = {x} outside domain ({lo}, {hi}]")]
    Domain { label: String, x: f64, lo: f64, hi: f64 },

    #[error("{label}: non-finite value at x = {x}")]
    NonFinite { label: String, x: f64 },

    #[error("{label}: positivity violated at x = {x} (value {value})")]
    NotPositive { label: String, x: f64, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol} at max depth")]
    Quadrature { a: f64, b: f64, tol: f64 },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("limit not non-zero: g({t}) = {value}")]
    LimitNotNonZero { t: f64, value: f64 },

    #[error("point {point} is off the sample grid (spacing {spacing})")]
    OffGrid { point: f64, spacing: f64 },

    #[error("partition too short: {got} knots, need {needed}")]
    PartitionTooShort { needed: usize, got: usize },

    #[error("{0} has no expression form")]
    NotExpressible(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised while reading or validating input rather than
    /// while computing.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::InvalidParameter(_) | Error::Scenario(_) | Error::Json(_)
        )
    }
}
