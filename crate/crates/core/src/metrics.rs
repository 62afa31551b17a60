//! Semantic distances between two formulae on a trajectory batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::robustness::{robustness_vector, satisfaction_vector};
use crate::trajectory::TrajectoryBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticMetrics {
    /// Euclidean distance between robustness vectors.
    pub d: f64,
    /// Cosine similarity of robustness vectors; `None` when either vector
    /// is zero.
    pub cos: Option<f64>,
    /// Fraction of trajectories on which satisfaction differs.
    pub diff: f64,
}

/// Metrics from robustness and Boolean satisfaction vectors over the same
/// batch.
pub fn metrics_from_vectors(a: &[f64], b: &[f64], sat_a: &[bool], sat_b: &[bool]) -> Result<SemanticMetrics> {
    if a.len() != b.len() || a.is_empty() || sat_a.len() != a.len() || sat_b.len() != a.len() {
        return Err(Error::ShapeMismatch(format!("robustness vectors of length {} and {}", a.len(), b.len())));
    }
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let diff = sat_a.iter().zip(sat_b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64;
    Ok(SemanticMetrics {
        d,
        cos: cosine(a, b).ok(),
        diff,
    })
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn semantic_metrics(gold: &Formula, cand: &Formula, xi: &TrajectoryBatch) -> Result<SemanticMetrics> {
    let a = robustness_vector(gold, xi)?;
    let b = robustness_vector(cand, xi)?;
    let sa = satisfaction_vector(gold, xi)?;
    let sb = satisfaction_vector(cand, xi)?;
    metrics_from_vectors(&a.values, &b.values, &sa, &sb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;

    fn batch3() -> TrajectoryBatch {
        TrajectoryBatch::new(vec![
            Trajectory::univariate(vec![1.0, 2.0]).unwrap(),
            Trajectory::univariate(vec![-1.0, 0.5]).unwrap(),
            Trajectory::univariate(vec![3.0, -2.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn identity_and_negation() {
        let xi = batch3();
        let f = Formula::ge(0, 0.25);
        let m = semantic_metrics(&f, &f, &xi).unwrap();
        assert_eq!((m.d, m.cos, m.diff), (0.0, Some(1.0), 0.0));
        let n = semantic_metrics(&f, &Formula::not(f.clone()), &xi).unwrap();
        assert_eq!(n.cos, Some(-1.0));
        assert_eq!(n.diff, 1.0);
    }

    #[test]
    fn hand_computed_pair() {
        // gold x_0 >= 0 : ρ = (1, -1, 3); cand x_0 <= 2 : ρ = (1, 3, -1)
        let xi = batch3();
        let m = semantic_metrics(&Formula::ge(0, 0.0), &Formula::le(0, 2.0), &xi).unwrap();
        assert!((m.d - 32f64.sqrt()).abs() < 1e-12);
        assert!((m.cos.unwrap() - (-5.0 / 11.0)).abs() < 1e-12);
        assert!((m.diff - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_has_no_cosine() {
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        let m = metrics_from_vectors(&[0.0, 0.0], &[1.0, -1.0], &[true, true], &[true, false]).unwrap();
        assert_eq!(m.cos, None);
        assert_eq!(m.diff, 0.5);
    }
}
