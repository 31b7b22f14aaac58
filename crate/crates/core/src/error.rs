use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    #[error("invalid fractional order {value} at index {index}: must lie in (0, 1)")]
    InvalidOrder { index: usize, value: f64 },

    #[error("empty order vector")]
    EmptyOrders,

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("weight exponent a = {0} outside (-1, 1)")]
    NonIntegrableWeight(f64),

    #[error("radius {radius} exceeds grid extent {extent}")]
    RadiusOutOfRange { radius: f64, extent: f64 },

    #[error("scope limit: {0}")]
    ScopeLimit(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("jacobian breakdown at row {row}: pivot {pivot:e}")]
    JacobianBreakdown { row: usize, pivot: f64 },

    #[error("boundary fit ill-conditioned (condition {condition:e}); increase grading or Ny")]
    IllConditionedFit { condition: f64 },

    #[error("evaluation point x = {x} too close to the data edge")]
    TooCloseToEdge { x: f64 },

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("growth function outside the admissible class: {0}")]
    ClassViolation(String),

    #[error("test function violates the support condition: {0}")]
    Support(String),
}

pub type Result<T> = std::result::Result<T, FracError>;
