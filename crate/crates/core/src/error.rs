use thiserror::Error;

use crate::optimizer::OptimTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("the synchronized state (0,0) must have transmission probability 0, got {0}")]
    SyncStateTransmits(f64),

    #[error("stationary solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite gradient entry at state ({age}, {error})")]
    NonFiniteGradient { age: usize, error: usize },

    #[error("objective became non-finite at step {step}")]
    Diverged { step: usize, trace: Box<OptimTrace> },

    #[error("baseline policy has zero average AoII; reduction is undefined")]
    DegenerateBaseline,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
