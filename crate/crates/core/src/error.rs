use thiserror::Error;

/// Syntax error in a coefficient expression. `position` is a 0-based
/// character offset into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation error at t = {t}: {message}")]
    Eval { t: f64, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("step size underflow at u = {at}")]
    StepUnderflow { at: f64 },
    #[error("step budget of {steps} exhausted at u = {at}")]
    StepBudget { steps: usize, at: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("system shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
