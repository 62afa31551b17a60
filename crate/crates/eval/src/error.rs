use std::io;

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] stl_core::Error),
    #[error(transparent)]
    Decoder(#[from] stl_decoder::DecoderError),
    #[error("anchor set mismatch: checkpoint uses {checkpoint}, test set uses {testset}")]
    AnchorSetMismatch { checkpoint: String, testset: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("plotting failed: {0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
