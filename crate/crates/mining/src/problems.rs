//! Two-class trajectory problems, including synthetic generators with a
//! known discriminating formula.
//!
//! All generators share a background process: a mean-reverting walk
//! `w(t+1) = 0.9 w(t) + N(0, step_std²)` started at `N(0, step_std²)` and
//! clipped to a band that keeps the ground truth exact.
//!
//! - `separable_level`: `x_0 = ±c + w` with `|w| <= 0.8 c`, `x_1 = w'`.
//!   Separated by `G[0,inf](x_0 >= 0)`.
//! - `delayed_dip`: `x_0 = w` with `|w| <= c / 2`; negatives drop to
//!   `-2c + w` for 5 steps starting inside `[40, 56]`. Separated by
//!   `G[40,60](x_0 >= -c)`.
//! - `two_var_band`: `x_1 = w` with `|w| <= c / 2`; negatives leave the band
//!   to `±2c + w` for 5 steps at a random time. Separated by
//!   `G[0,inf]((x_1 <= c) and (x_1 >= -c))` with `c` printed to the
//!   canonical precision.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use stl_core::{Formula, Interval, Trajectory, TrajectoryBatch};

use crate::error::{MiningError, Result};

#[derive(Debug, Clone)]
pub struct MiningProblem {
    pub train_pos: TrajectoryBatch,
    pub train_neg: TrajectoryBatch,
    pub test_pos: TrajectoryBatch,
    pub test_neg: TrajectoryBatch,
}

impl MiningProblem {
    pub fn new(
        train_pos: TrajectoryBatch,
        train_neg: TrajectoryBatch,
        test_pos: TrajectoryBatch,
        test_neg: TrajectoryBatch,
    ) -> Result<Self> {
        let p = MiningProblem {
            train_pos,
            train_neg,
            test_pos,
            test_neg,
        };
        let shape = (p.train_pos.t_steps(), p.train_pos.n_vars());
        for b in [&p.train_neg, &p.test_pos, &p.test_neg] {
            if (b.t_steps(), b.n_vars()) != shape {
                return Err(MiningError::ShapeMismatch(format!(
                    "batches of shape {:?} and {:?}",
                    shape,
                    (b.t_steps(), b.n_vars())
                )));
            }
        }
        Ok(p)
    }

    pub fn t_steps(&self) -> usize {
        self.train_pos.t_steps()
    }

    pub fn n_vars(&self) -> usize {
        self.train_pos.n_vars()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    SeparableLevel,
    DelayedDip,
    TwoVarBand,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::SeparableLevel => "separable_level",
            ProblemKind::DelayedDip => "delayed_dip",
            ProblemKind::TwoVarBand => "two_var_band",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = MiningError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable_level" => Ok(ProblemKind::SeparableLevel),
            "delayed_dip" => Ok(ProblemKind::DelayedDip),
            "two_var_band" => Ok(ProblemKind::TwoVarBand),
            _ => Err(MiningError::InvalidConfig(format!("unknown problem kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub kind: ProblemKind,
    /// Trajectories per class in each of the training and held-out splits.
    pub n_per_class: usize,
    pub t_steps: usize,
    pub n_vars: usize,
    pub c: f64,
    pub step_std: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(kind: ProblemKind, n_per_class: usize, seed: u64) -> Self {
        SyntheticConfig {
            kind,
            n_per_class,
            t_steps: 100,
            n_vars: 2,
            c: 3.0,
            step_std: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_per_class < 2 {
            return Err(MiningError::InvalidConfig("n_per_class must be >= 2".into()));
        }
        let min_t = if self.kind == ProblemKind::DelayedDip { 61 } else { 5 };
        if self.t_steps < min_t || self.n_vars < 2 {
            return Err(MiningError::InvalidConfig(format!(
                "{} needs at least {min_t} steps and 2 variables",
                self.kind
            )));
        }
        if !(self.c > 0.0 && self.step_std > 0.0) {
            return Err(MiningError::InvalidConfig("c and step_std must be positive".into()));
        }
        Ok(())
    }

    /// The formula that separates the classes of every generated sample.
    pub fn ground_truth(&self) -> Formula {
        match self.kind {
            ProblemKind::SeparableLevel => Formula::globally(Interval::unbounded(0), Formula::ge(0, 0.0)),
            ProblemKind::DelayedDip => Formula::globally(Interval::bounded(40, 60), Formula::ge(0, -self.c)),
            ProblemKind::TwoVarBand => Formula::globally(
                Interval::unbounded(0),
                Formula::and(Formula::le(1, self.c), Formula::ge(1, -self.c)),
            ),
        }
    }
}

const AR: f64 = 0.9;
const EVENT_LEN: usize = 5;

fn walk(rng: &mut ChaCha8Rng, noise: &Normal<f64>, t_steps: usize, bound: f64) -> Vec<f64> {
    let mut w = noise.sample(rng);
    (0..t_steps)
        .map(|t| {
            if t > 0 {
                w = AR * w + noise.sample(rng);
            }
            w.clamp(-bound, bound)
        })
        .collect()
}

fn trajectory(cfg: &SyntheticConfig, positive: bool, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let (t_steps, n_vars, c) = (cfg.t_steps, cfg.n_vars, cfg.c);
    let noise = Normal::new(0.0, cfg.step_std).map_err(|e| MiningError::InvalidConfig(e.to_string()))?;
    let mut vars: Vec<Vec<f64>> = Vec::with_capacity(n_vars);
    for v in 0..n_vars {
        let bound = match (cfg.kind, v) {
            (ProblemKind::SeparableLevel, 0) => 0.8 * c,
            (ProblemKind::DelayedDip, 0) | (ProblemKind::TwoVarBand, 1) => 0.5 * c,
            _ => 0.8 * c,
        };
        vars.push(walk(rng, &noise, t_steps, bound));
    }
    match cfg.kind {
        ProblemKind::SeparableLevel => {
            let shift = if positive { c } else { -c };
            vars[0].iter_mut().for_each(|x| *x += shift);
        }
        ProblemKind::DelayedDip if !positive => {
            let start = rng.random_range(40..=60 - EVENT_LEN + 1);
            vars[0][start..start + EVENT_LEN].iter_mut().for_each(|x| *x -= 2.0 * c);
        }
        ProblemKind::TwoVarBand if !positive => {
            let start = rng.random_range(0..=t_steps - EVENT_LEN);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            vars[1][start..start + EVENT_LEN].iter_mut().for_each(|x| *x += sign * 2.0 * c);
        }
        _ => {}
    }
    let mut values = vec![0.0; t_steps * n_vars];
    for (v, series) in vars.iter().enumerate() {
        for (t, &x) in series.iter().enumerate() {
            values[t * n_vars + v] = x;
        }
    }
    Ok(Trajectory::new(values, t_steps, n_vars)?)
}

/// Generates `n_per_class` trajectories per class for each split.
pub fn synthetic_problem(cfg: &SyntheticConfig) -> Result<MiningProblem> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batch = |positive: bool| -> Result<TrajectoryBatch> {
        let ts = (0..cfg.n_per_class)
            .map(|_| trajectory(cfg, positive, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryBatch::with_seed(ts, cfg.seed)?)
    };
    let train_pos = batch(true)?;
    let train_neg = batch(false)?;
    let test_pos = batch(true)?;
    let test_neg = batch(false)?;
    MiningProblem::new(train_pos, train_neg, test_pos, test_neg)
}
