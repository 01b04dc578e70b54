use thiserror::Error;

/// Errors raised by parameter validation, design construction and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("prevalence must lie in (0,1), got {0}")]
    InvalidPrevalence(f64),
    #[error("sensitivity must lie in (0,1], got {0}")]
    InvalidSensitivity(f64),
    #[error("invalid design parameters: {0}")]
    InvalidDesign(String),
    #[error("invalid theoretical parameters: {0}")]
    InvalidTheoretical(String),
    #[error("infeasible design: {0}")]
    Infeasible(String),
    #[error("malformed outcome vector: expected length {expected}, got {got}")]
    OutcomeLength { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
