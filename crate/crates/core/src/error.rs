use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}` for {what}: {value}")]
    InvalidParameter {
        what: &'static str,
        field: &'static str,
        value: f64,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid hyperparameters for {family}: {reason}")]
    InvalidHyperParams {
        family: &'static str,
        reason: String,
    },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("all particle weights collapsed at step t={step}: {hint}")]
    WeightCollapse { step: usize, hint: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn param(what: &'static str, field: &'static str, value: f64) -> Self {
        Error::InvalidParameter { what, field, value }
    }
}
