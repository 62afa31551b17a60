use std::path::PathBuf;
use std::sync::Arc;

use clap::{ArgAction, Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use stl_core::kernel::make_anchor_set;
use stl_core::trajectory::sample_seeded;
use stl_core::{BaseMeasureConfig, KernelConfig, Squash};

use super::{Outcome, SamplerArgs};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SquashArg {
    None,
    Arctan,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MakeAnchorsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of anchor formulae (embedding dimension).
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Trajectories in the kernel batch.
    #[arg(long, default_value_t = 1000)]
    pub n_traj: usize,
    #[arg(long, default_value_t = 100)]
    pub t_steps: usize,
    #[arg(long, default_value_t = 2)]
    pub n_vars: usize,
    #[arg(long, default_value_t = 1.0)]
    pub init_std: f64,
    #[arg(long, default_value_t = 0.5)]
    pub step_std: f64,
    /// Seed of the kernel trajectory batch.
    #[arg(long, default_value_t = 1)]
    pub batch_seed: u64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub normalized: bool,
    #[arg(long, value_enum, default_value_t = SquashArg::None)]
    pub squash: SquashArg,
    #[arg(long, default_value_t = 0.45)]
    pub p_leaf: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    /// Seed of the anchor draws.
    #[arg(long)]
    pub seed: u64,
}

pub fn make_anchors(args: &MakeAnchorsArgs) -> Result<Outcome> {
    let base = BaseMeasureConfig {
        t_steps: args.t_steps,
        n_vars: args.n_vars,
        init_std: args.init_std,
        step_std: args.step_std,
        seed: args.batch_seed,
    };
    let batch = sample_seeded(&base, args.n_traj)?;
    let kcfg = KernelConfig {
        squash: match args.squash {
            SquashArg::None => Squash::None,
            SquashArg::Arctan => Squash::Arctan,
        },
        ..KernelConfig::new(Arc::new(batch), args.normalized)
    };
    let scfg = args.sampler.config(args.p_leaf, args.seed);
    let a = make_anchor_set(args.dim, &scfg, kcfg, Some(base), &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    a.save(&args.out)?;
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs: vec![],
        outputs: vec![("anchors".into(), args.out.clone())],
        summary: json!({
            "anchor_set_id": a.id(),
            "dim": a.dim(),
            "kernel_batch_id": a.batch().id(),
        }),
    })
}
