use thiserror::Error;

/// Errors raised by the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapminError {
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("no minimizer exists: {0}")]
    NoMinimizer(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("cannot resolve the stationary points of R: {0}")]
    Resolution(String),
    #[error("height {0} is not in the admissible set")]
    NotAdmissible(f64),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("ODE integration failed: {0}")]
    Step(String),
    #[error("no bracket for mass {mass}: {reason}")]
    NoBracket { mass: f64, reason: String },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("root finding failed: {0}")]
    RootFinding(String),
}

pub type Result<T> = std::result::Result<T, CapminError>;
