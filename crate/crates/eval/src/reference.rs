//! Distribution of the semantic metrics over independent random formula
//! pairs, used to place evaluation aggregates in context.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stl_core::dataset::sample_many;
use stl_core::metrics::semantic_metrics;
use stl_core::{SamplerConfig, TrajectoryBatch};

use crate::error::{EvalError, Result};
use crate::stats::{percentile_rank, sorted, Quantiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            n_pairs: 10_000,
            seed: 0x7ef_e2e9ce,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Sorted metric samples. Pairs whose cosine is undefined contribute to `d`
/// and `diff` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub config: ReferenceConfig,
    pub xi_id: String,
    pub d: Vec<f64>,
    pub cos: Vec<f64>,
    pub diff: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    D,
    Cos,
    Diff,
}

impl ReferenceDistribution {
    pub fn build(cfg: &ReferenceConfig, xi: &TrajectoryBatch) -> Result<Self> {
        if cfg.n_pairs == 0 {
            return Err(EvalError::InvalidConfig("reference needs at least one pair".into()));
        }
        if cfg.sampler.n_vars != xi.n_vars() {
            return Err(EvalError::InvalidConfig(format!(
                "sampler draws {}-variable formulae for {}-variable trajectories",
                cfg.sampler.n_vars,
                xi.n_vars()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fs = sample_many(&cfg.sampler, 2 * cfg.n_pairs, xi.t_steps(), &mut rng)?;
        let metrics = fs
            .par_chunks(2)
            .map(|p| semantic_metrics(&p[0], &p[1], xi))
            .collect::<stl_core::Result<Vec<_>>>()?;
        Ok(ReferenceDistribution {
            config: cfg.clone(),
            xi_id: xi.id().to_string(),
            d: sorted(metrics.iter().map(|m| m.d)),
            cos: sorted(metrics.iter().filter_map(|m| m.cos)),
            diff: sorted(metrics.iter().map(|m| m.diff)),
        })
    }

    pub fn sample(&self, m: Metric) -> &[f64] {
        match m {
            Metric::D => &self.d,
            Metric::Cos => &self.cos,
            Metric::Diff => &self.diff,
        }
    }

    /// Percentile rank of each aggregate within the sample of metric `m`.
    pub fn percentiles(&self, m: Metric, q: &Quantiles) -> Quantiles {
        let sample = self.sample(m);
        q.map(|x| percentile_rank(sample, x).unwrap_or(f64::NAN))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
