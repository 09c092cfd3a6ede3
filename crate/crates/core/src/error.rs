use thiserror::Error;

pub type Result<T> = std::result::Result<T, HamError>;

#[derive(Debug, Clone, Error)]
pub enum HamError {
    #[error("symplectic form is singular: {0}")]
    SingularForm(String),
    #[error("outside the chart domain: {0}")]
    OutOfDomain(String),
    #[error("step size underflow at t = {t}: {reason}")]
    StepUnderflow { t: f64, reason: String },
    #[error("{what}: residual {residual:e} exceeds {limit:e}")]
    Residual { what: String, residual: f64, limit: f64 },
    #[error("degenerate Gram matrix at t = {t} (normalized |det| = {det:e})")]
    DegenerateGram { t: f64, det: f64 },
    #[error("{what} is ill-conditioned (condition number {cond:e})")]
    IllConditioned { what: String, cond: f64 },
    #[error("critical point of H: |dH| = {0:e}")]
    CriticalPoint(f64),
    #[error("conjugate point at t = {t}")]
    ConjugatePoint { t: f64 },
    #[error("limit did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
}

impl HamError {
    pub fn residual(what: impl Into<String>, residual: f64, limit: f64) -> Self {
        HamError::Residual { what: what.into(), residual, limit }
    }

    /// Hypothesis violations are reported separately from numerical failures.
    /// A critical point breaks regularity of the level; a conjugate point
    /// breaks the no-conjugate-points assumption of the limit constructions.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, HamError::Hypothesis(_) | HamError::CriticalPoint(_) | HamError::ConjugatePoint { .. })
    }
}
