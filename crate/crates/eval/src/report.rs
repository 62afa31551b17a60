//! Decoder and nearest-neighbour evaluation reports.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stl_core::dataset::Dataset;
use stl_core::metrics::semantic_metrics;
use stl_core::store::EmbeddingStore;
use stl_core::{parse, BaseMeasureConfig, Formula, TrajectoryBatch};
use stl_decoder::{decode_many, Checkpoint, DecodeConfig};

use crate::error::{EvalError, Result};
use crate::reference::{Metric, ReferenceConfig, ReferenceDistribution};
use crate::stats::{sorted, Quantiles};

pub const REPORT_SCHEMA: &str = "stl-eval-report/1";
pub const DEFAULT_XI_SIZE: usize = 500;
pub const DEFAULT_XI_SEED: u64 = 0x000e_7a1b;

/// Fresh base-measure trajectories for scoring, drawn with `seed` instead of
/// the kernel batch seed.
pub fn evaluation_batch(base: &BaseMeasureConfig, size: usize, seed: u64) -> Result<TrajectoryBatch> {
    let cfg = BaseMeasureConfig { seed, ..base.clone() };
    Ok(stl_core::trajectory::sample_seeded(&cfg, size)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: usize,
    pub gold: String,
    pub decoded: String,
    /// Parses and is evaluable on the scoring batch.
    pub valid: bool,
    pub d: Option<f64>,
    pub cos: Option<f64>,
    pub diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Number of values aggregated.
    pub n: usize,
    pub quantiles: Quantiles,
    /// Percentile of each quantile within the random-pair reference sample.
    pub reference_percentile: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    /// `decoder` or `nearest-neighbor`.
    pub source: String,
    pub testset_kind: String,
    pub anchor_set_id: String,
    pub checkpoint_step: Option<usize>,
    pub decode: Option<DecodeConfig>,
    pub xi_id: String,
    pub xi_size: usize,
    pub xi_seed: u64,
    pub reference: ReferenceConfig,
    /// Aggregates cover valid outputs only; validity is over all records.
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub meta: ReportMeta,
    pub n: usize,
    pub n_valid: usize,
    pub validity_rate: f64,
    pub d: Option<MetricSummary>,
    pub cos: Option<MetricSummary>,
    pub diff: Option<MetricSummary>,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn summary(&self, m: Metric) -> Option<&MetricSummary> {
        match m {
            Metric::D => self.d.as_ref(),
            Metric::Cos => self.cos.as_ref(),
            Metric::Diff => self.diff.as_ref(),
        }
    }
}

fn score_one(id: usize, gold: &Formula, decoded: String, xi: &TrajectoryBatch) -> EvalRecord {
    let gold_text = gold.to_string();
    let invalid = |decoded: String, e: String| EvalRecord {
        id,
        gold: gold_text.clone(),
        decoded,
        valid: false,
        d: None,
        cos: None,
        diff: None,
        error: Some(e),
    };
    let cand = match parse(&decoded) {
        Ok(f) => f,
        Err(e) => return invalid(decoded, e.to_string()),
    };
    if !cand.fits(xi.t_steps(), xi.n_vars()) {
        return invalid(decoded, "formula is not evaluable on the scoring trajectories".into());
    }
    match semantic_metrics(gold, &cand, xi) {
        Ok(m) => EvalRecord {
            id,
            gold: gold_text,
            decoded,
            valid: true,
            d: Some(m.d),
            cos: m.cos,
            diff: Some(m.diff),
            error: None,
        },
        Err(e) => invalid(decoded, e.to_string()),
    }
}

fn summarize(values: impl Iterator<Item = f64>, reference: &ReferenceDistribution, m: Metric) -> Option<MetricSummary> {
    let s = sorted(values);
    let quantiles = Quantiles::of(&s)?;
    Some(MetricSummary {
        n: s.len(),
        reference_percentile: reference.percentiles(m, &quantiles),
        quantiles,
    })
}

/// Scores candidate texts against gold formulae on `xi`. `ids` label the
/// records.
pub fn score_texts(
    ids: &[usize],
    golds: &[Formula],
    decoded: Vec<String>,
    xi: &TrajectoryBatch,
    reference: &ReferenceDistribution,
    meta: ReportMeta,
) -> Result<EvalReport> {
    if golds.len() != decoded.len() || golds.len() != ids.len() {
        return Err(EvalError::InvalidConfig(format!(
            "{} gold formulae for {} outputs",
            golds.len(),
            decoded.len()
        )));
    }
    if reference.xi_id != xi.id() {
        return Err(EvalError::InvalidConfig(
            "reference distribution was computed on a different scoring batch".into(),
        ));
    }
    let records: Vec<EvalRecord> = decoded
        .into_par_iter()
        .enumerate()
        .map(|(i, text)| score_one(ids[i], &golds[i], text, xi))
        .collect();
    let valid: Vec<&EvalRecord> = records.iter().filter(|r| r.valid).collect();
    let n = records.len();
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        meta,
        n,
        n_valid: valid.len(),
        validity_rate: if n == 0 { 0.0 } else { valid.len() as f64 / n as f64 },
        d: summarize(valid.iter().filter_map(|r| r.d), reference, Metric::D),
        cos: summarize(valid.iter().filter_map(|r| r.cos), reference, Metric::Cos),
        diff: summarize(valid.iter().filter_map(|r| r.diff), reference, Metric::Diff),
        records,
    })
}

fn meta(source: &str, testset: &Dataset, xi: &TrajectoryBatch, reference: &ReferenceDistribution) -> ReportMeta {
    ReportMeta {
        source: source.to_string(),
        testset_kind: testset.manifest.kind.clone(),
        anchor_set_id: testset.manifest.anchor_set_id.clone(),
        checkpoint_step: None,
        decode: None,
        xi_id: xi.id().to_string(),
        xi_size: xi.len(),
        xi_seed: xi.seed(),
        reference: reference.config.clone(),
        aggregation: "quantiles over valid outputs; validity over all records".into(),
    }
}

/// Decodes every test embedding with the checkpoint and scores the result.
pub fn evaluate(
    ckpt: &Checkpoint,
    testset: &Dataset,
    xi: &TrajectoryBatch,
    reference: &ReferenceDistribution,
    dcfg: &DecodeConfig,
) -> Result<EvalReport> {
    if ckpt.anchor_set_id != testset.manifest.anchor_set_id {
        return Err(EvalError::AnchorSetMismatch {
            checkpoint: ckpt.anchor_set_id.clone(),
            testset: testset.manifest.anchor_set_id.clone(),
        });
    }
    let golds = testset.formulae()?;
    let ids: Vec<usize> = testset.records.iter().map(|r| r.id).collect();
    let embeddings: Vec<_> = testset.records.iter().map(|r| testset.embedding(r).clone()).collect();
    let decoded = decode_many(&embeddings, ckpt, dcfg)?;
    let mut m = meta("decoder", testset, xi, reference);
    m.checkpoint_step = Some(ckpt.step);
    m.decode = Some(dcfg.clone());
    score_texts(&ids, &golds, decoded, xi, reference, m)
}

/// Scores the nearest stored formula of each test embedding.
pub fn evaluate_baseline(
    store: &EmbeddingStore,
    testset: &Dataset,
    xi: &TrajectoryBatch,
    reference: &ReferenceDistribution,
) -> Result<EvalReport> {
    let golds = testset.formulae()?;
    let ids: Vec<usize> = testset.records.iter().map(|r| r.id).collect();
    let decoded = testset
        .records
        .par_iter()
        .map(|r| Ok(store.rows()[store.nn_query(testset.embedding(r), 1)?[0].index].text.clone()))
        .collect::<Result<Vec<String>>>()?;
    score_texts(&ids, &golds, decoded, xi, reference, meta("nearest-neighbor", testset, xi, reference))
}
