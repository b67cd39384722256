//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {point:?} is within {step} of the chart boundary on axis {axis}")]
    Boundary { point: Vec<f64>, axis: usize, step: f64 },

    #[error("degenerate contact element at x={x:?}, p={p:?}, p_s={p_s}: {reason}")]
    Degenerate {
        x: Vec<f64>,
        p: Vec<f64>,
        p_s: f64,
        reason: String,
    },

    #[error("step size underflow at tau={tau} (h={step:e})")]
    StepUnderflow { tau: f64, step: f64, last: Vec<f64> },

    #[error("state is off shell: |G|={residual:e} exceeds {tol:e}")]
    OffShell { residual: f64, tol: f64 },

    #[error("wave diagram at {x:?} is empty: every ray is lightlike")]
    EmptyDiagram { x: Vec<f64> },

    #[error("no on-shell lift of sample {index} on the requested branch: {reason}")]
    NoLift { index: usize, reason: String },

    #[error("characteristic does not cross the section {axis}={value} within tau budget {budget}")]
    NoCrossing { axis: usize, value: f64, budget: f64 },

    #[error("loop touches the deleted set p_s=0 or leaves its branch: {0}")]
    DeletedSet(String),

    #[error("fit quality: {0}")]
    FitQuality(String),

    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Invalid(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
