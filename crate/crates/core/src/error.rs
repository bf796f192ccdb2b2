use thiserror::Error;

/// Errors produced anywhere in the simulation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schedule undefined at t = {t}: {reason}")]
    ScheduleRange { t: f64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(
        "propagator u(t, t0) is singular at t = {t} (step {index}, sigma_min/sigma_max = {ratio:.3e})"
    )]
    SingularPropagator { t: f64, index: usize, ratio: f64 },

    #[error("state error: {0}")]
    State(String),

    #[error("integration failure at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("unitarity defect {defect:.3e} exceeds limit at step {step}")]
    Unitarity { step: usize, defect: f64 },

    #[error("unsupported scope: {0}")]
    Unsupported(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
