use std::io;

use crate::syntax::SyntaxError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("temporal window starting at step {start} is empty on a horizon of {horizon} steps")]
    EmptyWindow { start: usize, horizon: usize },
    #[error("variable x_{var} out of range for {n_vars}-dimensional trajectories")]
    VariableOutOfRange { var: usize, n_vars: usize },
    #[error("time {t} is outside the trajectory horizon of {horizon} steps")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("rejection sampling gave up after {attempts} attempts")]
    FilterExhausted { attempts: usize },
    #[error("formula has numerically zero self-kernel ({self_kernel:e})")]
    DegenerateFormula { self_kernel: f64 },
    #[error("robustness vector has zero norm")]
    ZeroVector,
    #[error("embedding store is empty")]
    EmptyStore,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("anchor set mismatch: expected {expected}, found {found}")]
    AnchorSetMismatch { expected: String, found: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
