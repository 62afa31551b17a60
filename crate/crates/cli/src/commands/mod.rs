//! Subcommand implementations and the argument groups they share.

pub mod anchors;
pub mod data;
pub mod decode;
pub mod eval;
pub mod mine;
pub mod report;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;
use stl_core::{AnchorSet, BaseMeasureConfig, SamplerConfig, TrajectoryBatch};
use stl_decoder::{DecodeConfig, DecodeMode};
use stl_eval::report::{DEFAULT_XI_SEED, DEFAULT_XI_SIZE};

use crate::error::{CliError, Result};

/// What a command produced, for its run manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Directory or file next to which the manifest is written; `None`
    /// writes no manifest.
    pub manifest_at: Option<PathBuf>,
    pub inputs: Vec<(String, PathBuf)>,
    pub outputs: Vec<(String, PathBuf)>,
    pub summary: Value,
}

/// Formula sampler parameters other than `p_leaf`, which recipes set.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    /// Variables referenced by sampled atoms.
    #[arg(long, default_value_t = 2)]
    pub sampler_vars: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub threshold_std: f64,
    #[arg(long, default_value_t = 20)]
    pub max_time_bound: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_unbounded: f64,
}

impl SamplerArgs {
    pub fn config(&self, p_leaf: f64, seed: u64) -> SamplerConfig {
        SamplerConfig {
            p_leaf,
            n_vars: self.sampler_vars,
            threshold_mean: self.threshold_mean,
            threshold_std: self.threshold_std,
            max_time_bound: self.max_time_bound,
            p_unbounded: self.p_unbounded,
            seed,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Greedy,
    Temperature,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecodeOpts {
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    pub mode: ModeArg,
    /// Sampling temperature for `--mode temperature`.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Generated-token limit (default: the model's sequence length).
    #[arg(long)]
    pub max_length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub decode_seed: u64,
}

impl DecodeOpts {
    pub fn config(&self, max_seq_len: usize) -> Result<DecodeConfig> {
        let mode = match self.mode {
            ModeArg::Greedy => DecodeMode::Greedy,
            ModeArg::Temperature => DecodeMode::Temperature { tau: self.tau },
        };
        let d = DecodeConfig {
            mode,
            max_length: self.max_length.unwrap_or(max_seq_len),
            seed: self.decode_seed,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Scoring batch drawn from the anchor set's base measure.
#[derive(Debug, Clone, Args, Serialize)]
pub struct XiArgs {
    #[arg(long, default_value_t = DEFAULT_XI_SIZE)]
    pub xi_size: usize,
    #[arg(long, default_value_t = DEFAULT_XI_SEED)]
    pub xi_seed: u64,
}

impl XiArgs {
    pub fn batch(&self, a: &AnchorSet) -> Result<TrajectoryBatch> {
        let base = base_measure(a);
        if base.seed == self.xi_seed {
            return Err(CliError::Usage(format!(
                "xi seed {} equals the kernel batch seed; the scoring batch must be fresh",
                self.xi_seed
            )));
        }
        Ok(stl_eval::evaluation_batch(&base, self.xi_size, self.xi_seed)?)
    }
}

pub fn base_measure(a: &AnchorSet) -> BaseMeasureConfig {
    a.meta().base_measure.clone().unwrap_or_else(|| BaseMeasureConfig {
        t_steps: a.batch().t_steps(),
        n_vars: a.batch().n_vars(),
        seed: a.batch().seed(),
        ..Default::default()
    })
}

/// Fails with the path in the message when an input is missing.
pub fn existing(p: &Path) -> Result<&Path> {
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Io {
            path: p.to_path_buf(),
            source: std::io::ErrorKind::NotFound.into(),
        })
    }
}

pub fn load_anchors(dir: &Path) -> Result<AnchorSet> {
    Ok(AnchorSet::load(existing(dir)?)?)
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).map_err(CliError::io(p))?;
    }
    Ok(())
}
