use std::path::PathBuf;

use clap::{ArgAction, Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use stl_core::dataset::Dataset;
use stl_decoder::decode::embedding_f32;
use stl_decoder::{examples_from_dataset, Checkpoint, ModelConfig, TrainConfig, TrainOptions};

use super::{existing, Outcome};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Tiny,
    Micro,
    Paper,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Receives `metrics.csv`, `latest.ckpt` and `final.ckpt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub model: Preset,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Default: embedding dimension / d_model.
    #[arg(long)]
    pub memory_slots: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub probe_every: Option<usize>,
    #[arg(long)]
    pub probe_size: Option<usize>,
    /// Held-out dataset whose embeddings feed the validity probes.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Continue from `<out>/latest.ckpt` when present.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub resume: bool,
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub verbose: bool,
    #[arg(long)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn model_config(&self, embedding_dim: usize) -> Result<ModelConfig> {
        let mut m = match self.model {
            Preset::Desk => ModelConfig::desk(),
            Preset::Tiny => ModelConfig::tiny(),
            Preset::Micro => ModelConfig::micro(),
            Preset::Paper => ModelConfig::paper(),
        };
        m.n_layers = self.n_layers.unwrap_or(m.n_layers);
        m.n_heads = self.n_heads.unwrap_or(m.n_heads);
        m.d_model = self.d_model.unwrap_or(m.d_model);
        m.d_ff = self.d_ff.unwrap_or(m.d_ff);
        m.dropout = self.dropout.unwrap_or(m.dropout);
        m.max_seq_len = self.max_seq_len.unwrap_or(m.max_seq_len);
        m.memory_slots = match self.memory_slots {
            Some(s) => s,
            None if embedding_dim.is_multiple_of(m.d_model) => embedding_dim / m.d_model,
            None => {
                return Err(CliError::Usage(format!(
                    "embedding dimension {embedding_dim} is not a multiple of d_model {}",
                    m.d_model
                )))
            }
        };
        if m.embedding_dim() != embedding_dim {
            return Err(CliError::Usage(format!(
                "model reads {}-dimensional embeddings, dataset has {embedding_dim}",
                m.embedding_dim()
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = match self.model {
            Preset::Paper => TrainConfig::default(),
            _ => TrainConfig::desk(),
        };
        t.total_steps = self.steps.unwrap_or(t.total_steps);
        t.warmup_steps = self.warmup.unwrap_or(t.warmup_steps);
        t.base_lr = self.lr.unwrap_or(t.base_lr);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.grad_clip = self.grad_clip.unwrap_or(t.grad_clip);
        t.log_every = self.log_every.unwrap_or(t.log_every);
        t.checkpoint_every = self.checkpoint_every.unwrap_or(t.checkpoint_every);
        t.probe_every = self.probe_every.unwrap_or(t.probe_every);
        t.probe_size = self.probe_size.unwrap_or(t.probe_size);
        t.seed = self.seed;
        t.validate()?;
        Ok(t)
    }
}

pub fn train(args: &TrainArgs) -> Result<Outcome> {
    let ds = Dataset::load(existing(&args.data)?)?;
    let dim = ds.embeddings.first().map_or(0, |e| e.dim());
    let mcfg = args.model_config(dim)?;
    let tcfg = args.train_config()?;
    let (examples, skipped) = examples_from_dataset(&ds, mcfg.max_seq_len);
    let mut inputs = vec![("data".to_string(), args.data.clone())];
    let probe_embeddings = match &args.probe {
        Some(p) => {
            inputs.push(("probe".into(), p.clone()));
            let probe = Dataset::load(existing(p)?)?;
            if probe.manifest.anchor_set_id != ds.manifest.anchor_set_id {
                return Err(CliError::Usage("probe set was built under a different anchor set".into()));
            }
            probe.embeddings.iter().take(tcfg.probe_size).map(embedding_f32).collect()
        }
        None => Vec::new(),
    };
    let latest = args.out.join("latest.ckpt");
    let resume = if args.resume && latest.exists() {
        Some(Checkpoint::load(existing(&latest)?)?)
    } else {
        None
    };
    let resumed_from = resume.as_ref().map(|c| c.step);
    let outcome = stl_decoder::train(
        &examples,
        &mcfg,
        &tcfg,
        &ds.manifest.anchor_set_id,
        TrainOptions {
            out_dir: Some(args.out.clone()),
            probe_embeddings,
            resume,
            verbose: args.verbose,
        },
    )?;
    let last = outcome.log.last();
    let last_probe = outcome.log.iter().rev().find_map(|r| r.validity_rate);
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs,
        outputs: vec![
            ("final_checkpoint".into(), args.out.join("final.ckpt")),
            ("metrics".into(), args.out.join("metrics.csv")),
        ],
        summary: json!({
            "anchor_set_id": ds.manifest.anchor_set_id,
            "model": mcfg,
            "parameters": mcfg.param_count(),
            "train": tcfg,
            "examples": examples.len(),
            "skipped_too_long": skipped,
            "resumed_from_step": resumed_from,
            "final_step": outcome.checkpoint.step,
            "final_loss": last.map(|r| r.loss),
            "final_validity_rate": last_probe,
        }),
    })
}
