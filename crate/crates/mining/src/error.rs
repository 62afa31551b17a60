use std::io;

pub type Result<T> = std::result::Result<T, MiningError>;

#[derive(Debug, thiserror::Error)]
pub enum MiningError {
    #[error(transparent)]
    Core(#[from] stl_core::Error),
    #[error(transparent)]
    Decoder(#[from] stl_decoder::DecoderError),
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("no decoded candidate or initial formula was valid")]
    NoValidFormula,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
