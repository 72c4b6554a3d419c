use thiserror::Error;

/// Errors raised by norm evaluation, factorization and the diagnostics built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero vector has no factorization")]
    ZeroVector,

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, gap {gap:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        gap: f64,
    },

    #[error("norm not evaluable: {0}")]
    NotEvaluable(String),

    #[error("insufficient ambient dimension: need {needed}, have {available}")]
    InsufficientDimension { needed: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
