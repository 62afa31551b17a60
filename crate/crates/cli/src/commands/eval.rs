use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;
use stl_core::dataset::Dataset;
use stl_core::store::EmbeddingStore;
use stl_core::TrajectoryBatch;
use stl_decoder::Checkpoint;
use stl_eval::plot::plot_metric_distributions;
use stl_eval::{evaluate, evaluate_baseline, EvalReport, Metric, ReferenceConfig, ReferenceDistribution};

use super::{existing, create_parent, load_anchors, DecodeOpts, Outcome, XiArgs};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    /// Decoder checkpoint to score.
    #[arg(long, conflicts_with = "store")]
    pub ckpt: Option<PathBuf>,
    /// Retrieval store to score instead of a checkpoint.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub testset: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Cache for the random-pair reference distribution; built when absent.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub ref_pairs: usize,
    #[arg(long, default_value_t = ReferenceConfig::default().seed)]
    pub ref_seed: u64,
    /// SVG histograms of the metrics.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub xi: XiArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub decode: DecodeOpts,
}

/// Loads the cached distribution when it matches `cfg` and `xi`, else builds
/// it (and caches it when a path is given).
pub fn reference(cfg: &ReferenceConfig, xi: &TrajectoryBatch, cache: Option<&Path>) -> Result<ReferenceDistribution> {
    if let Some(p) = cache.filter(|p| p.exists()) {
        let r = ReferenceDistribution::load(p)?;
        if &r.config == cfg && r.xi_id == xi.id() {
            return Ok(r);
        }
    }
    let r = ReferenceDistribution::build(cfg, xi)?;
    if let Some(p) = cache {
        create_parent(p)?;
        r.save(p)?;
    }
    Ok(r)
}

fn median(rep: &EvalReport, m: Metric) -> Option<f64> {
    rep.summary(m).map(|s| s.quantiles.median)
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let a = load_anchors(&args.anchors)?;
    let testset = Dataset::load(existing(&args.testset)?)?;
    if testset.manifest.anchor_set_id != a.id() {
        return Err(stl_core::Error::AnchorSetMismatch {
            expected: a.id().to_string(),
            found: testset.manifest.anchor_set_id.clone(),
        }
        .into());
    }
    let xi = args.xi.batch(&a)?;
    let rcfg = ReferenceConfig {
        n_pairs: args.ref_pairs,
        seed: args.ref_seed,
        ..Default::default()
    };
    let r = reference(&rcfg, &xi, args.reference.as_deref())?;
    let mut inputs = vec![("anchors".to_string(), args.anchors.clone()), ("testset".into(), args.testset.clone())];
    let rep = match (&args.ckpt, &args.store) {
        (Some(c), None) => {
            inputs.push(("checkpoint".into(), c.clone()));
            let ckpt = Checkpoint::load(existing(c)?)?;
            evaluate(&ckpt, &testset, &xi, &r, &args.decode.config(ckpt.config().max_seq_len)?)?
        }
        (None, Some(s)) => {
            inputs.push(("store".into(), s.clone()));
            let store = EmbeddingStore::load(existing(s)?)?;
            if store.anchor_set_id() != a.id() {
                return Err(stl_core::Error::AnchorSetMismatch {
                    expected: a.id().to_string(),
                    found: store.anchor_set_id().to_string(),
                }
                .into());
            }
            evaluate_baseline(&store, &testset, &xi, &r)?
        }
        _ => return Err(CliError::Usage("give exactly one of --ckpt or --store".into())),
    };
    create_parent(&args.report)?;
    rep.save(&args.report)?;
    let mut outputs = vec![("report".to_string(), args.report.clone())];
    if let Some(p) = &args.plot {
        create_parent(p)?;
        plot_metric_distributions(&rep, p)?;
        outputs.push(("plot".into(), p.clone()));
    }
    Ok(Outcome {
        manifest_at: Some(args.report.clone()),
        inputs,
        outputs,
        summary: json!({
            "source": rep.meta.source,
            "n": rep.n,
            "n_valid": rep.n_valid,
            "validity_rate": rep.validity_rate,
            "median_d": median(&rep, Metric::D),
            "median_cos": median(&rep, Metric::Cos),
            "median_diff": median(&rep, Metric::Diff),
            "median_d_reference_percentile": rep.summary(Metric::D).map(|s| s.reference_percentile.median),
            "xi_id": rep.meta.xi_id,
        }),
    })
}
