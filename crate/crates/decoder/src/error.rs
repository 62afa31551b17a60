use std::io;

pub type Result<T> = std::result::Result<T, DecoderError>;

#[derive(Debug, thiserror::Error)]
pub enum DecoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] stl_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
