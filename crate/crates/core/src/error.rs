use thiserror::Error;

use crate::phase_type::ValidationReport;

pub type Result<T> = std::result::Result<T, PassageError>;

#[derive(Debug, Error)]
pub enum PassageError {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid phase-type representation: {0}")]
    InvalidPhaseType(ValidationReport),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix exponential overflow: {0}")]
    Overflow(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("misposed problem: {0}")]
    Misposed(String),

    #[error("method not applicable: {0}")]
    NotApplicable(String),

    #[error("basis does not span a closed Lie algebra (commutator residual {residual:.3e})")]
    NotClosed { residual: f64 },

    #[error("Riccati solution blows up near x = {x}")]
    BlowUp { x: f64 },

    #[error("ODE integration failed at x = {x}: {reason}")]
    Integration { x: f64, reason: String },

    #[error("boundary conditions not met: residual {residual:.3e}")]
    ShootingNonConvergence { residual: f64 },

    #[error("truncation certificate failed: {0}")]
    Truncation(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("every simulated path was censored; increase max_time")]
    AllCensored,
}
