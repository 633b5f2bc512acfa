use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("weight density is singular on the boundary for mu = {mu} < 1/2")]
    BoundarySingularity { mu: f64 },

    #[error("dimension d = {0} is not supported by exact rules (only d = 2, 3)")]
    UnsupportedDimension(usize),

    #[error("grid functions live on different quadrature rules")]
    RuleMismatch,

    #[error("rule exactness {have} is below the required degree {need}")]
    InsufficientExactness { have: usize, need: usize },

    #[error("kernel tail bound {bound:e} exceeds tolerance {tol:e}; increase n_max or t")]
    TailTooLarge { bound: f64, tol: f64 },

    #[error("time t = {t} is below the truncation minimum {t_min}")]
    TimeTooSmall { t: f64, t_min: f64 },

    #[error("origin is excluded: {0} is undefined at x = 0")]
    AtOrigin(&'static str),

    #[error("normalizing constant overflows for n = {n}, j = {j}")]
    Overflow { n: usize, j: usize },

    #[error("Poincare quotient has zero energy but positive variance ({lhs:e})")]
    DegenerateEnergy { lhs: f64 },

    #[error("w^(1-p') is not integrable on region {0}")]
    NonIntegrableWeight(String),

    #[error("heat kernel is non-positive ({h:e}) at t = {t}")]
    NonPositiveKernel { h: f64, t: f64 },

    #[error("gradient check failed for family {family}: max error {err:e}")]
    GradientMismatch { family: String, err: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
