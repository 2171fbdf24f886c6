use thiserror::Error;

use crate::quadrature::QuadError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("empty sample")]
    EmptySample,

    #[error("weighted mass {total_mass} does not exceed level {p}")]
    MassDeficient { p: f64, total_mass: f64 },

    #[error("levels must satisfy 0 < q < p, got q = {q}, p = {p}")]
    InvalidLevels { q: f64, p: f64 },

    #[error("density vanishes at {at}")]
    DensityZero { at: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),

    #[error("nonpositive denominator in {what}: {value}")]
    NonPositiveDenominator { what: &'static str, value: f64 },

    #[error("zero variance: rate function undefined")]
    ZeroVariance,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("analytic truth unavailable: {0}")]
    TruthUnavailable(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

impl Error {
    /// True for failures that stem from the numerics rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergent(_)
                | Error::Quadrature(_)
                | Error::NonPositiveDenominator { .. }
                | Error::ZeroVariance
                | Error::DensityZero { .. }
                | Error::MassDeficient { .. }
        )
    }
}
