//! Teacher-forced training loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stl_core::dataset::Dataset;
use stl_core::Vocabulary;

use crate::checkpoint::Checkpoint;
use crate::config::{DecodeConfig, ModelConfig, TrainConfig};
use crate::decode::{decode_texts, embedding_f32};
use crate::error::{DecoderError, Result};
use crate::model::{Model, PaddedBatch};
use crate::optim::{clip_grad_norm, AdamW};

/// One training pair: `bos + tokens + eos` and the conditioning embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub embedding: Vec<f32>,
}

/// Tokenizes every record. Records whose teacher-forced input would exceed
/// `max_seq_len` are skipped; the second value counts them.
pub fn examples_from_dataset(ds: &Dataset, max_seq_len: usize) -> (Vec<Example>, usize) {
    let vocab = Vocabulary::stl();
    let mut out = Vec::with_capacity(ds.len());
    let mut skipped = 0;
    for r in &ds.records {
        let mut tokens = vec![vocab.bos];
        tokens.extend(vocab.tokenize(&r.formula_text).ids);
        tokens.push(vocab.eos);
        if tokens.len() > max_seq_len + 1 {
            skipped += 1;
            continue;
        }
        out.push(Example {
            tokens,
            embedding: embedding_f32(ds.embedding(r)),
        });
    }
    (out, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub lr: f64,
    pub validity_rate: Option<f64>,
}

impl LogRow {
    fn csv(&self) -> String {
        let v = self.validity_rate.map(|v| format!("{v:.4}")).unwrap_or_default();
        format!("{},{:.6},{:.6e},{}", self.step, self.loss, self.lr, v)
    }
}

#[derive(Debug, Default)]
pub struct TrainOptions {
    /// Directory for `metrics.csv`, `latest.ckpt` and `final.ckpt`.
    pub out_dir: Option<PathBuf>,
    /// Embeddings decoded by the validity probes; the first `probe_size`
    /// training embeddings when empty.
    pub probe_embeddings: Vec<Vec<f32>>,
    pub resume: Option<Checkpoint>,
    /// Print log rows to stderr.
    pub verbose: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

/// Fraction of decodes that parse.
pub fn validity_rate(model: &Model<f32>, embeddings: &[Vec<f32>]) -> Result<f64> {
    if embeddings.is_empty() {
        return Ok(0.0);
    }
    let dcfg = DecodeConfig {
        max_length: model.cfg.max_seq_len,
        ..Default::default()
    };
    let texts = decode_texts(model, embeddings, &dcfg)?;
    let ok = texts.iter().filter(|t| stl_core::parse(t).is_ok()).count();
    Ok(ok as f64 / texts.len() as f64)
}

/// Example indices of batch `step` (0-based). Each epoch is a fresh
/// permutation drawn from its own stream, so any step can be replayed.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, step: usize) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch_size);
    let (epoch, b) = (step / per_epoch, step % per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm[b * batch_size..((b + 1) * batch_size).min(n)].to_vec()
}

const DROPOUT_SALT: u64 = 0x5eed_d80f;

pub fn train(
    examples: &[Example],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    anchor_set_id: &str,
    opts: TrainOptions,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    mcfg.validate()?;
    if examples.is_empty() {
        return Err(DecoderError::InvalidConfig("no training examples".into()));
    }
    if let Some(e) = examples.iter().find(|e| e.embedding.len() != mcfg.embedding_dim()) {
        return Err(DecoderError::ShapeMismatch(format!(
            "embedding of length {} for a model expecting {}",
            e.embedding.len(),
            mcfg.embedding_dim()
        )));
    }

    let mut ckpt = match opts.resume {
        Some(c) => {
            c.check_compatible(anchor_set_id)?;
            if &c.model.cfg != mcfg {
                return Err(DecoderError::CheckpointMismatch("model config differs from the checkpoint".into()));
            }
            c
        }
        None => {
            let model = Model::new(mcfg.clone(), &mut ChaCha8Rng::seed_from_u64(tcfg.seed))?;
            Checkpoint::new(model, anchor_set_id)
        }
    };
    ckpt.train_config = Some(tcfg.clone());
    let mut opt = ckpt.optimizer.take().unwrap_or_else(|| AdamW::new(&ckpt.model.params));

    let probe: Vec<Vec<f32>> = if opts.probe_embeddings.is_empty() {
        examples.iter().take(tcfg.probe_size).map(|e| e.embedding.clone()).collect()
    } else {
        opts.probe_embeddings
    };

    let mut csv = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
            writeln!(w, "step,loss,lr,validity_rate")?;
            Some(w)
        }
        None => None,
    };
    let pad = Vocabulary::stl().pad;
    let mut log = Vec::new();
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);

    while ckpt.step < tcfg.total_steps {
        let idx = batch_indices(examples.len(), tcfg.batch_size, tcfg.seed, ckpt.step);
        let seqs: Vec<&[u32]> = idx.iter().map(|&i| examples[i].tokens.as_slice()).collect();
        let mems: Vec<&[f32]> = idx.iter().map(|&i| examples[i].embedding.as_slice()).collect();
        let batch = PaddedBatch::from_sequences(&seqs, pad);
        let mut drop_rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ DROPOUT_SALT);
        drop_rng.set_stream(ckpt.step as u64);

        let (loss, grads) = ckpt.model.loss_and_grad(&batch, &mems, Some(&mut drop_rng), true)?;
        let mut grads = grads.expect("requested");
        let norm = clip_grad_norm(&mut grads, tcfg.grad_clip);
        if !loss.is_finite() || !norm.is_finite() {
            let failed = ckpt.step + 1;
            if let Some(dir) = &opts.out_dir {
                ckpt.optimizer = Some(opt);
                ckpt.save(dir.join("last_good.ckpt"))?;
            }
            return Err(DecoderError::NonFiniteLoss { step: failed });
        }
        let step = ckpt.step + 1;
        let lr = tcfg.lr_at(step);
        opt.update(&mut ckpt.model.params, &grads, lr, tcfg);
        ckpt.step = step;
        loss_sum += loss;
        loss_n += 1;

        let probe_now = tcfg.probe_every > 0 && (step % tcfg.probe_every == 0 || step == tcfg.total_steps);
        let log_now = probe_now || step % tcfg.log_every.max(1) == 0 || step == tcfg.total_steps;
        if log_now {
            let row = LogRow {
                step,
                loss: loss_sum / loss_n as f64,
                lr,
                validity_rate: if probe_now {
                    Some(validity_rate(&ckpt.model, &probe)?)
                } else {
                    None
                },
            };
            (loss_sum, loss_n) = (0.0, 0);
            if let Some(w) = &mut csv {
                writeln!(w, "{}", row.csv())?;
                w.flush()?;
            }
            if opts.verbose {
                eprintln!("{}", row.csv());
            }
            log.push(row);
        }
        if let Some(dir) = &opts.out_dir {
            if tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0 && step < tcfg.total_steps {
                ckpt.optimizer = Some(opt.clone());
                ckpt.save(dir.join("latest.ckpt"))?;
                ckpt.optimizer = None;
            }
        }
    }

    ckpt.optimizer = Some(opt);
    if let Some(dir) = &opts.out_dir {
        ckpt.save(dir.join("final.ckpt"))?;
    }
    Ok(TrainOutcome { checkpoint: ckpt, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut seen: Vec<usize> = (0..4).flat_map(|s| batch_indices(10, 3, 7, s)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_indices(10, 3, 7, 3).len(), 1);
        assert_eq!(batch_indices(10, 3, 7, 5), batch_indices(10, 3, 7, 5));
        assert_ne!(
            (0..4).flat_map(|s| batch_indices(10, 3, 7, s)).collect::<Vec<_>>(),
            (4..8).flat_map(|s| batch_indices(10, 3, 7, s)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn log_row_csv() {
        let r = LogRow { step: 10, loss: 1.5, lr: 1e-3, validity_rate: None };
        assert_eq!(r.csv(), "10,1.500000,1.000000e-3,");
    }
}
