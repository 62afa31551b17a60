//! Semantic evaluation of decoded formulae: per-example metrics, quantile
//! aggregates placed within a random-pair reference distribution, and the
//! nearest-neighbour retrieval baseline.

pub mod error;
pub mod plot;
pub mod reference;
pub mod report;
pub mod stats;

pub use error::{EvalError, Result};
pub use reference::{Metric, ReferenceConfig, ReferenceDistribution};
pub use report::{evaluate, evaluate_baseline, evaluation_batch, score_texts, EvalRecord, EvalReport, MetricSummary};
pub use stats::{percentile_rank, quantile, Quantiles};
