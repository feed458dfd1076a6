use thiserror::Error;

/// Errors raised by the predictor, reduction, feedback and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("step {step} does not divide the delay {delay} into a whole number of samples")]
    StepNotDivisor { step: f64, delay: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),

    #[error("input gain {0:e} is too close to zero to invert")]
    DivisionByZero(f64),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
