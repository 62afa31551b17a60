//! Decoder-only transformer that generates STL formula text conditioned on a
//! kernel embedding through cross-attention.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{DecodeConfig, DecodeMode, ModelConfig, TrainConfig};
pub use decode::{decode, decode_many, decode_texts, generate, KvCache};
pub use error::{DecoderError, Result};
pub use model::{Model, PaddedBatch};
pub use params::Params;
pub use scalar::Scalar;
pub use train::{examples_from_dataset, train, Example, LogRow, TrainOptions, TrainOutcome};
