//! Order statistics over finite samples.

use serde::{Deserialize, Serialize};

/// Copy of `xs` sorted ascending; NaNs are dropped.
pub fn sorted(xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.into_iter().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Quantile `q ∈ [0, 1]` of an ascending sample, interpolating linearly
/// between the order statistics at ranks `floor(h)` and `ceil(h)` with
/// `h = (n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Percentage of the reference sample strictly below `x`, in `[0, 100]`.
pub fn percentile_rank(sorted: &[f64], x: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let below = sorted.partition_point(|&v| v < x);
    Some(100.0 * below as f64 / sorted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p99: f64,
}

impl Quantiles {
    pub fn of(sorted: &[f64]) -> Option<Self> {
        Some(Quantiles {
            q1: quantile(sorted, 0.25)?,
            median: quantile(sorted, 0.5)?,
            q3: quantile(sorted, 0.75)?,
            p99: quantile(sorted, 0.99)?,
        })
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Quantiles {
            q1: f(self.q1),
            median: f(self.median),
            q3: f(self.q3),
            p99: f(self.p99),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_small_samples() {
        let s = sorted([4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(quantile(&s, 0.5), Some(3.0));
        assert_eq!(quantile(&s, 0.25), Some(2.0));
        assert_eq!(quantile(&s, 0.0), Some(1.0));
        assert_eq!(quantile(&s, 1.0), Some(5.0));
        assert!((quantile(&s, 0.99).unwrap() - 4.96).abs() < 1e-12);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), Some(1.5));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn percentile_rank_boundaries() {
        let s = sorted([1.0, 2.0, 2.0, 3.0]);
        assert_eq!(percentile_rank(&s, 1.0), Some(0.0));
        assert_eq!(percentile_rank(&s, 0.5), Some(0.0));
        assert_eq!(percentile_rank(&s, 2.5), Some(75.0));
        assert_eq!(percentile_rank(&s, 9.0), Some(100.0));
    }
}
