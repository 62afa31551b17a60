//! Versioned checkpoint container.
//!
//! Layout: 8-byte magic, `u32` version, length-prefixed JSON header, then
//! every parameter tensor as little-endian `f32` in header order, followed
//! by the optimizer moments (first, then second) when present.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use stl_core::binio;
use stl_core::Vocabulary;

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{DecoderError, Result};
use crate::model::Model;
use crate::optim::AdamW;
use crate::params::Params;

const MAGIC: &[u8; 8] = b"STLCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optimizer: Option<AdamW<f32>>,
    pub step: usize,
    pub anchor_set_id: String,
    pub vocabulary_hash: String,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: usize,
    anchor_set_id: String,
    vocabulary_hash: String,
    tensors: Vec<TensorInfo>,
    optimizer_step: Option<usize>,
    train_config: Option<TrainConfig>,
}

fn write_params(w: &mut impl Write, p: &Params<f32>) -> Result<()> {
    for t in &p.tensors {
        binio::write_f32s(w, t.iter().copied())?;
    }
    Ok(())
}

fn read_params(r: &mut impl Read, infos: &[TensorInfo]) -> Result<Params<f32>> {
    let mut names = Vec::with_capacity(infos.len());
    let mut tensors = Vec::with_capacity(infos.len());
    for info in infos {
        let [rows, cols] = info.shape;
        let data = binio::read_f32s(r, rows * cols)?;
        names.push(info.name.clone());
        tensors.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| DecoderError::Format(e.to_string()))?);
    }
    Ok(Params { names, tensors })
}

impl Checkpoint {
    pub fn new(model: Model<f32>, anchor_set_id: &str) -> Self {
        Checkpoint {
            model,
            optimizer: None,
            step: 0,
            anchor_set_id: anchor_set_id.to_string(),
            vocabulary_hash: Vocabulary::stl().hash(),
            train_config: None,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.cfg
    }

    /// Fails unless the checkpoint was trained against this anchor set and
    /// the built-in vocabulary.
    pub fn check_compatible(&self, anchor_set_id: &str) -> Result<()> {
        if self.anchor_set_id != anchor_set_id {
            return Err(DecoderError::CheckpointMismatch(format!(
                "checkpoint anchor set {} but embeddings use {anchor_set_id}",
                self.anchor_set_id
            )));
        }
        let vocab = Vocabulary::stl().hash();
        if self.vocabulary_hash != vocab {
            return Err(DecoderError::CheckpointMismatch(format!(
                "checkpoint vocabulary {} but this build uses {vocab}",
                self.vocabulary_hash
            )));
        }
        Ok(())
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            config: self.model.cfg.clone(),
            step: self.step,
            anchor_set_id: self.anchor_set_id.clone(),
            vocabulary_hash: self.vocabulary_hash.clone(),
            tensors: self
                .model
                .params
                .names
                .iter()
                .zip(&self.model.params.tensors)
                .map(|(n, t)| TensorInfo {
                    name: n.clone(),
                    shape: [t.nrows(), t.ncols()],
                })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            train_config: self.train_config.clone(),
        };
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_str(w, &serde_json::to_string(&header)?)?;
        write_params(w, &self.model.params)?;
        if let Some(o) = &self.optimizer {
            write_params(w, &o.m)?;
            write_params(w, &o.v)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, MAGIC)?;
        let version = binio::read_u32(r)?;
        if version != VERSION {
            return Err(DecoderError::Format(format!("unsupported checkpoint version {version}")));
        }
        let header: Header = serde_json::from_str(&binio::read_str(r)?)?;
        let params = read_params(r, &header.tensors)?;
        let model = Model::from_params(header.config, params)?;
        let optimizer = match header.optimizer_step {
            Some(step) => Some(AdamW {
                m: read_params(r, &header.tensors)?,
                v: read_params(r, &header.tensors)?,
                step,
            }),
            None => None,
        };
        Ok(Checkpoint {
            model,
            optimizer,
            step: header.step,
            anchor_set_id: header.anchor_set_id,
            vocabulary_hash: header.vocabulary_hash,
            train_config: header.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}
