//! Discrimination objective and classification quality of a formula.

use serde::{Deserialize, Serialize};
use stl_core::{robustness, Formula, TrajectoryBatch};

use crate::error::Result;

/// Guards the denominator of the objective.
pub const G_EPS: f64 = 1e-6;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(mean_p - mean_n) / (std_p + std_n + eps)` over robustness samples,
/// with population standard deviations.
pub fn g_from_robustness(pos: &[f64], neg: &[f64]) -> f64 {
    let (mp, sp) = mean_std(pos);
    let (mn, sn) = mean_std(neg);
    (mp - mn) / (sp + sn + G_EPS)
}

pub fn robustness_at_zero(f: &Formula, batch: &TrajectoryBatch) -> Result<Vec<f64>> {
    Ok(batch.iter().map(|x| robustness(f, x, 0)).collect::<stl_core::Result<_>>()?)
}

/// Objective of `f` on positive and negative trajectories, using robustness
/// at `t = 0`.
pub fn objective_g(f: &Formula, pos: &TrajectoryBatch, neg: &TrajectoryBatch) -> Result<f64> {
    Ok(g_from_robustness(&robustness_at_zero(f, pos)?, &robustness_at_zero(f, neg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub mcr: f64,
    /// `tp / (tp + fp)`, and 0 when nothing is predicted positive.
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// A trajectory is predicted positive when the robustness of `f` at `t = 0`
/// is `>= 0`.
pub fn classification_report(f: &Formula, pos: &TrajectoryBatch, neg: &TrajectoryBatch) -> Result<ClassificationReport> {
    let predicted = |b: &TrajectoryBatch| -> Result<usize> {
        Ok(robustness_at_zero(f, b)?.iter().filter(|&&r| r >= 0.0).count())
    };
    let tp = predicted(pos)?;
    let fp = predicted(neg)?;
    let fn_ = pos.len() - tp;
    let tn = neg.len() - fp;
    Ok(ClassificationReport {
        mcr: (fp + fn_) as f64 / (pos.len() + neg.len()) as f64,
        precision: if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: tp as f64 / pos.len() as f64,
        tp,
        fp,
        tn,
        fn_,
    })
}
