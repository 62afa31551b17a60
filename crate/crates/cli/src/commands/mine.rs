use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args};
use serde::Serialize;
use serde_json::json;
use stl_decoder::Checkpoint;
use stl_mining::{synthetic_problem, GPConfig, MiningConfig, ProblemKind, SyntheticConfig, UCBConfig};

use super::{existing, load_anchors, DecodeOpts, Outcome, SamplerArgs};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args, Serialize)]
pub struct MineArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub anchors: PathBuf,
    /// separable_level, delayed_dip or two_var_band.
    #[arg(long)]
    pub problem: ProblemKind,
    /// Trajectories per class in each of the training and held-out splits.
    #[arg(long, default_value_t = 50)]
    pub n_per_class: usize,
    /// Generator seed (default: `--seed`).
    #[arg(long)]
    pub problem_seed: Option<u64>,
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub walk_std: f64,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Sampled formulae in the initial design.
    #[arg(long, default_value_t = 100)]
    pub init: usize,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 16)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 50)]
    pub gd_steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub gd_lr: f64,
    #[arg(long, default_value_t = 1)]
    pub candidates: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub noise_variance: f64,
    /// Re-select GP hyperparameters by marginal likelihood.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub refit: bool,
    #[arg(long, default_value_t = 10)]
    pub refit_every: usize,
    #[arg(long, default_value_t = 0.45)]
    pub p_leaf: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub decode: DecodeOpts,
    /// Receives `result.json` and `trace.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
}

impl MineArgs {
    pub fn mining_config(&self, max_seq_len: usize) -> Result<MiningConfig> {
        Ok(MiningConfig {
            n_init: self.init,
            iterations: self.iters,
            gp: GPConfig {
                noise_variance: self.noise_variance,
                fit_hyperparams: self.refit,
                ..Default::default()
            },
            ucb: UCBConfig {
                beta: self.beta,
                n_starts: self.n_starts,
                gd_steps: self.gd_steps,
                gd_lr: self.gd_lr,
                candidates_per_iter: self.candidates,
            },
            refit_every: self.refit_every,
            sampler: self.sampler.config(self.p_leaf, self.seed),
            decode: self.decode.config(max_seq_len)?,
            seed: self.seed,
        })
    }

    pub fn problem_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            c: self.c,
            step_std: self.walk_std,
            ..SyntheticConfig::new(self.problem, self.n_per_class, self.problem_seed.unwrap_or(self.seed))
        }
    }
}

pub fn mine(args: &MineArgs) -> Result<Outcome> {
    let a = load_anchors(&args.anchors)?;
    let ckpt = Checkpoint::load(existing(&args.ckpt)?)?;
    let cfg = args.mining_config(ckpt.config().max_seq_len)?;
    let pcfg = args.problem_config();
    let problem = synthetic_problem(&SyntheticConfig {
        t_steps: a.batch().t_steps(),
        n_vars: a.batch().n_vars(),
        ..pcfg.clone()
    })?;
    std::fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let trace_path = args.out.join("trace.jsonl");
    let mut trace = BufWriter::new(File::create(&trace_path).map_err(CliError::io(&trace_path))?);
    let result = stl_mining::mine(&problem, &ckpt, &a, &cfg, Some(&mut trace))?;
    trace.flush().map_err(CliError::io(&trace_path))?;
    let result_path = args.out.join("result.json");
    let mut text = serde_json::to_string_pretty(&json!({
        "problem": pcfg,
        "ground_truth": pcfg.ground_truth().to_string(),
        "config": cfg,
        "result": result,
    }))?;
    text.push('\n');
    std::fs::write(&result_path, text).map_err(CliError::io(&result_path))?;
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs: vec![("checkpoint".into(), args.ckpt.clone()), ("anchors".into(), args.anchors.clone())],
        outputs: vec![("result".into(), result_path), ("trace".into(), trace_path)],
        summary: json!({
            "problem": args.problem.to_string(),
            "best_formula": result.best_formula,
            "best_G": result.best_g,
            "best_nodes": result.best_nodes,
            "mcr": result.mcr,
            "precision": result.precision,
            "recall": result.recall,
            "decoded": result.n_decoded,
            "invalid": result.n_invalid,
        }),
    })
}
