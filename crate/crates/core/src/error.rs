use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{name} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { name: &'static str, asymmetry: f64 },
    #[error("{name} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { name: &'static str, min_eig: f64 },
    #[error("{name} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { name: &'static str, min_eig: f64 },
    #[error("{name} has a non-finite entry")]
    NonFinite { name: &'static str },
    #[error("structural assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("innovation covariance C X Cᵀ + R is singular")]
    SingularInnovation,
    #[error("inner matrix Bᵀ X B + U is singular")]
    SingularInner,
    #[error("fixed-point iteration hit {iterations} iterations without converging (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("bisection bracket invalid: {0}")]
    PredicateNotMonotone(String),
    #[error("infeasible power-splitting region: {0}")]
    InfeasibleRegion(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
