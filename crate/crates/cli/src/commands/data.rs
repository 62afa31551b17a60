use std::path::PathBuf;

use clap::{ArgAction, Args};
use serde::Serialize;
use serde_json::json;
use stl_core::dataset::{build_test_sets, build_training_set, Dataset, DatasetRecipe, RecipeName, TestSetConfig};
use stl_core::store::EmbeddingStore;
use stl_core::Formula;

use super::{existing, load_anchors, Outcome, SamplerArgs, XiArgs};
use crate::error::{CliError, Result};

fn recipe(name: RecipeName, total: usize, depths: (Option<usize>, Option<usize>), p_leaf: Option<f64>) -> Result<DatasetRecipe> {
    let mut r = match depths {
        (None, None) => DatasetRecipe::new(name, total),
        (Some(lo), Some(hi)) if name == RecipeName::Balanced => DatasetRecipe::balanced_depths(lo, hi, total),
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("--depth-min/--depth-max apply to the balanced recipe only".into()))
        }
        _ => return Err(CliError::Usage("give both --depth-min and --depth-max".into())),
    };
    if let Some(p) = p_leaf {
        r.p_leaf = p;
    }
    Ok(r)
}

fn dataset_summary(ds: &Dataset) -> serde_json::Value {
    json!({
        "kind": ds.manifest.kind,
        "n_records": ds.manifest.n_records,
        "depth_histogram": ds.manifest.depth_histogram,
        "records_hash": ds.manifest.records_hash,
        "anchor_set_id": ds.manifest.anchor_set_id,
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// easyskewed, hardskewed, balanced or random.
    #[arg(long)]
    pub recipe: RecipeName,
    #[arg(long)]
    pub total: usize,
    /// Custom depth range for the balanced recipe.
    #[arg(long)]
    pub depth_min: Option<usize>,
    #[arg(long)]
    pub depth_max: Option<usize>,
    #[arg(long)]
    pub p_leaf: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub seed: u64,
}

pub fn gen_data(args: &GenDataArgs) -> Result<Outcome> {
    let a = load_anchors(&args.anchors)?;
    let r = recipe(args.recipe, args.total, (args.depth_min, args.depth_max), args.p_leaf)?;
    let ds = build_training_set(&r, &a, &args.sampler.config(r.p_leaf, args.seed), args.seed)?;
    ds.save(&args.out)?;
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs: vec![("anchors".into(), args.anchors.clone())],
        outputs: vec![("dataset".into(), args.out.clone())],
        summary: dataset_summary(&ds),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenTestsetsArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    /// Retrieval store used to rank the worst-case candidates.
    #[arg(long)]
    pub store: PathBuf,
    /// Datasets whose formulae are excluded (repeatable).
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    /// Writes `balanced/`, `ood/` and `worst/` under this directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Full-size sets (3000 / 500 / 400); overrides the counts below.
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub paper_scale: bool,
    #[arg(long, default_value_t = 200)]
    pub balanced_total: usize,
    #[arg(long, default_value_t = 2)]
    pub depth_min: usize,
    #[arg(long, default_value_t = 7)]
    pub depth_max: usize,
    #[arg(long, default_value_t = 200)]
    pub ood_total: usize,
    #[arg(long, default_value_t = 8)]
    pub ood_depth: usize,
    #[arg(long, default_value_t = 200)]
    pub worst_k: usize,
    #[arg(long, default_value_t = 2000)]
    pub worst_pool: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub xi: XiArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub seed: u64,
}

pub fn gen_testsets(args: &GenTestsetsArgs) -> Result<Outcome> {
    let a = load_anchors(&args.anchors)?;
    let store = EmbeddingStore::load(existing(&args.store)?)?;
    let mut exclude = std::collections::HashSet::new();
    for p in &args.exclude {
        exclude.extend(Dataset::load(existing(p)?)?.texts());
    }
    let cfg = if args.paper_scale {
        TestSetConfig::paper_scale()
    } else {
        TestSetConfig {
            balanced_total: args.balanced_total,
            balanced_depths: (args.depth_min, args.depth_max),
            ood_total: args.ood_total,
            ood_depth: args.ood_depth,
            worst_k: args.worst_k,
            worst_pool: args.worst_pool,
            ..Default::default()
        }
    };
    let xi = args.xi.batch(&a)?;
    let sampler = args.sampler.config(cfg.p_leaf, args.seed);
    let sets = build_test_sets(&cfg, &a, &sampler, &store, &xi, &exclude, args.seed)?;
    let mut summary = serde_json::Map::new();
    for (name, ds) in [("balanced", &sets.balanced), ("ood", &sets.ood), ("worst", &sets.worst)] {
        ds.save(args.out.join(name))?;
        summary.insert(name.into(), dataset_summary(ds));
    }
    summary.insert("xi_id".into(), xi.id().into());
    let mut inputs = vec![("anchors".into(), args.anchors.clone()), ("store".into(), args.store.clone())];
    for (i, p) in args.exclude.iter().enumerate() {
        inputs.push((format!("exclude{i}"), p.clone()));
    }
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs,
        outputs: vec![("testsets".into(), args.out.clone())],
        summary: summary.into(),
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildStoreArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset directories whose formulae are added (repeatable).
    #[arg(long)]
    pub data: Vec<PathBuf>,
    /// Additional formulae drawn with `--recipe`.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long, default_value_t = RecipeName::Random)]
    pub recipe: RecipeName,
    #[arg(long)]
    pub depth_min: Option<usize>,
    #[arg(long)]
    pub depth_max: Option<usize>,
    #[arg(long)]
    pub p_leaf: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    /// Required with `--sample`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keeps the first N distinct rows.
    #[arg(long)]
    pub max_rows: Option<usize>,
}

pub fn build_store(args: &BuildStoreArgs) -> Result<Outcome> {
    let a = load_anchors(&args.anchors)?;
    let mut rows: Vec<(Formula, stl_core::Embedding)> = Vec::new();
    let mut inputs = vec![("anchors".into(), args.anchors.clone())];
    let mut add = |ds: &Dataset| -> Result<()> {
        if ds.manifest.anchor_set_id != a.id() {
            return Err(stl_core::Error::AnchorSetMismatch {
                expected: a.id().to_string(),
                found: ds.manifest.anchor_set_id.clone(),
            }
            .into());
        }
        for (f, r) in ds.formulae()?.into_iter().zip(&ds.records) {
            rows.push((f, ds.embedding(r).clone()));
        }
        Ok(())
    };
    for p in &args.data {
        add(&Dataset::load(existing(p)?)?)?;
        inputs.push((format!("data{}", inputs.len()), p.clone()));
    }
    if args.sample > 0 {
        let seed = args
            .seed
            .ok_or_else(|| CliError::Usage("--seed is required with --sample".into()))?;
        let r = recipe(args.recipe, args.sample, (args.depth_min, args.depth_max), args.p_leaf)?;
        add(&build_training_set(&r, &a, &args.sampler.config(r.p_leaf, seed), seed)?)?;
    }
    if rows.is_empty() {
        return Err(CliError::Usage("nothing to store: give --data or --sample".into()));
    }
    let offered = rows.len();
    let mut store = EmbeddingStore::from_rows(rows, a.id(), a.dim())?;
    let distinct = store.len();
    if let Some(n) = args.max_rows {
        if n > distinct {
            return Err(CliError::Usage(format!("--max-rows {n} exceeds the {distinct} distinct rows")));
        }
        store.truncate(n);
    }
    store.save(&args.out)?;
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs,
        outputs: vec![("store".into(), args.out.clone())],
        summary: json!({
            "anchor_set_id": store.anchor_set_id(),
            "rows": store.len(),
            "duplicates_dropped": offered - distinct,
        }),
    })
}
