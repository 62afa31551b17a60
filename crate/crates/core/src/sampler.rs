//! Random recursive formula growth.
//!
//! Every node is an atom with probability `p_leaf`; otherwise an operator
//! is drawn uniformly from `not`, `and`, `or`, `F`, `G`, `U` and its children
//! are grown the same way.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{Comparison, Formula, Interval};

/// Unfiltered growth forces atoms at this depth, or once this many nodes
/// exist, so that supercritical configurations (`p_leaf < 1/3`) terminate.
pub const MAX_UNFILTERED_DEPTH: usize = 64;
pub const MAX_UNFILTERED_NODES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub p_leaf: f64,
    pub n_vars: usize,
    pub threshold_mean: f64,
    pub threshold_std: f64,
    /// Interval lower bounds are drawn from `[0, max_time_bound)`, finite
    /// upper bounds from `(lower, max_time_bound]`.
    pub max_time_bound: usize,
    pub p_unbounded: f64,
    /// Inclusive `(min_depth, max_depth)` accepted by rejection sampling.
    pub depth_filter: Option<(usize, usize)>,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p_leaf: 0.45,
            n_vars: 2,
            threshold_mean: 0.0,
            threshold_std: 1.0,
            max_time_bound: 20,
            p_unbounded: 0.1,
            depth_filter: None,
            max_attempts: 200_000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_depths(&self, min_depth: usize, max_depth: usize) -> Self {
        SamplerConfig {
            depth_filter: Some((min_depth, max_depth)),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_leaf) {
            return bad("p_leaf must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.p_unbounded) {
            return bad("p_unbounded must lie in [0, 1]");
        }
        if self.n_vars == 0 {
            return bad("n_vars must be at least 1");
        }
        if self.max_time_bound == 0 {
            return bad("max_time_bound must be at least 1");
        }
        if self.threshold_std.is_nan() || self.threshold_std < 0.0 || !self.threshold_mean.is_finite() {
            return bad("threshold distribution must have finite mean and std >= 0");
        }
        if let Some((lo, hi)) = self.depth_filter {
            if lo == 0 || lo > hi {
                return bad("depth filter must satisfy 1 <= min_depth <= max_depth");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Op {
    Not,
    And,
    Or,
    Eventually,
    Globally,
    Until,
}

const OPS: [Op; 6] = [Op::Not, Op::And, Op::Or, Op::Eventually, Op::Globally, Op::Until];

struct Grower<'a> {
    cfg: &'a SamplerConfig,
    normal: Normal<f64>,
    /// Growth aborts once a node would sit deeper than this.
    limit: usize,
    /// Nodes at this depth are forced to be atoms.
    force_leaf_at: usize,
    node_budget: usize,
    nodes: std::cell::Cell<usize>,
}

impl Grower<'_> {
    fn atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Formula {
        let var = rng.random_range(0..self.cfg.n_vars);
        let cmp = if rng.random_bool(0.5) { Comparison::Ge } else { Comparison::Le };
        let threshold = self.normal.sample(rng);
        Formula::atom(var, cmp, threshold)
    }

    fn interval<R: Rng + ?Sized>(&self, rng: &mut R) -> Interval {
        let max = self.cfg.max_time_bound;
        let lower = rng.random_range(0..max);
        if rng.random_bool(self.cfg.p_unbounded) {
            Interval::unbounded(lower)
        } else {
            Interval::bounded(lower, rng.random_range(lower + 1..=max))
        }
    }

    fn grow<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize) -> Option<Formula> {
        if depth > self.limit {
            return None;
        }
        self.nodes.set(self.nodes.get() + 1);
        if depth >= self.force_leaf_at
            || self.nodes.get() >= self.node_budget
            || rng.random_bool(self.cfg.p_leaf)
        {
            return Some(self.atom(rng));
        }
        let op = OPS[rng.random_range(0..OPS.len())];
        let f = match op {
            Op::Not => Formula::not(self.grow(rng, depth + 1)?),
            Op::And => {
                let a = self.grow(rng, depth + 1)?;
                Formula::and(a, self.grow(rng, depth + 1)?)
            }
            Op::Or => {
                let a = self.grow(rng, depth + 1)?;
                Formula::or(a, self.grow(rng, depth + 1)?)
            }
            Op::Eventually => {
                let i = self.interval(rng);
                Formula::eventually(i, self.grow(rng, depth + 1)?)
            }
            Op::Globally => {
                let i = self.interval(rng);
                Formula::globally(i, self.grow(rng, depth + 1)?)
            }
            Op::Until => {
                let i = self.interval(rng);
                let a = self.grow(rng, depth + 1)?;
                Formula::until(i, a, self.grow(rng, depth + 1)?)
            }
        };
        Some(f)
    }
}

/// Draws one formula. With a depth filter, draws are rejected until the
/// depth falls inside the filter (growth stops early as soon as a draw
/// exceeds the maximum depth, which leaves the accepted distribution
/// unchanged).
pub fn sample_formula<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Result<Formula> {
    cfg.validate()?;
    let normal = Normal::new(cfg.threshold_mean, cfg.threshold_std)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    match cfg.depth_filter {
        None => {
            let g = Grower {
                cfg,
                normal,
                limit: usize::MAX,
                force_leaf_at: MAX_UNFILTERED_DEPTH,
                node_budget: MAX_UNFILTERED_NODES,
                nodes: Default::default(),
            };
            Ok(g.grow(rng, 1).expect("unlimited growth always completes"))
        }
        Some((lo, hi)) => {
            let g = Grower {
                cfg,
                normal,
                limit: hi,
                force_leaf_at: usize::MAX,
                node_budget: usize::MAX,
                nodes: Default::default(),
            };
            for _ in 0..cfg.max_attempts {
                g.nodes.set(0);
                if let Some(f) = g.grow(rng, 1) {
                    if f.depth() >= lo {
                        return Ok(f);
                    }
                }
            }
            Err(Error::FilterExhausted {
                attempts: cfg.max_attempts,
            })
        }
    }
}

/// Samples until the formula is evaluable at `t = 0` on a `t_steps` x
/// `n_vars` grid, counting rejections against `cfg.max_attempts`.
pub fn sample_fitting<R: Rng + ?Sized>(
    cfg: &SamplerConfig,
    t_steps: usize,
    rng: &mut R,
) -> Result<Formula> {
    for _ in 0..cfg.max_attempts.max(1) {
        let f = sample_formula(cfg, rng)?;
        if f.fits(t_steps, cfg.n_vars) {
            return Ok(f);
        }
    }
    Err(Error::FilterExhausted {
        attempts: cfg.max_attempts,
    })
}
