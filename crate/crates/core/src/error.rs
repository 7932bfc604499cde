use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("invalid problem definition: {0}")]
    Problem(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("diffusion matrix is singular at {point:?} (condition number {condition:.3e})")]
    SingularSigma { point: Vec<f64>, condition: f64 },

    #[error("euler step unstable at step {step}: alpha*h/eps^2 = {ratio:.3} exceeds 0.2")]
    StepStability { step: usize, ratio: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary sampling failed: {0}")]
    BoundarySampling(String),

    #[error("R changes sign nowhere on the grid")]
    NoSignChange,

    #[error("empty seed set: support of g does not meet the grid")]
    EmptySeedSet,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("hypotheses not satisfied: {0}")]
    Hypotheses(String),

    #[error("all {0} samples timed out")]
    AllTimedOut(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
