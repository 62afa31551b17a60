//! Discrete-time quantitative (robustness) and Boolean semantics.
//!
//! Both evaluators work on whole signals: a node is evaluated on the prefix
//! `t = 0..len` its parent needs, so evaluating at `t = 0` only touches the
//! steps the formula can reach.
//!
//! A formula is defined on `t < T - lead` (see [`Formula::lead`]). Temporal
//! windows `[t + a, t + b]` are clipped to the steps on which their operands
//! are defined, which for atoms is the last grid index; a window whose start
//! lies past that point is an [`Error::EmptyWindow`].

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{Atom, Comparison, Formula, Interval};
use crate::trajectory::{Trajectory, TrajectoryBatch};

/// Finite stand-in for the robustness of `tt`.
pub const TRUE_ROBUSTNESS: f64 = 1e6;

/// Robustness of a formula at `t = 0` on every trajectory of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVector {
    pub values: Vec<f64>,
    pub batch_id: String,
}

impl RobustnessVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn robustness(f: &Formula, xi: &Trajectory, t: usize) -> Result<f64> {
    if t >= xi.t_steps() {
        return Err(Error::TimeOutOfRange { t, horizon: xi.t_steps() });
    }
    Ok(signal(f, xi, t + 1)?[t])
}

pub fn satisfaction(f: &Formula, xi: &Trajectory, t: usize) -> Result<bool> {
    if t >= xi.t_steps() {
        return Err(Error::TimeOutOfRange { t, horizon: xi.t_steps() });
    }
    Ok(bool_signal(f, xi, t + 1)?[t])
}

pub fn robustness_vector(f: &Formula, batch: &TrajectoryBatch) -> Result<RobustnessVector> {
    let values = batch
        .iter()
        .map(|xi| robustness(f, xi, 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessVector {
        values,
        batch_id: batch.id().to_string(),
    })
}

/// Boolean satisfaction at `t = 0` on every trajectory of a batch.
pub fn satisfaction_vector(f: &Formula, batch: &TrajectoryBatch) -> Result<Vec<bool>> {
    batch.iter().map(|xi| satisfaction(f, xi, 0)).collect()
}

/// Robustness vectors of many formulae, evaluated in parallel.
pub fn robustness_matrix(fs: &[Formula], batch: &TrajectoryBatch) -> Result<Vec<RobustnessVector>> {
    fs.par_iter().map(|f| robustness_vector(f, batch)).collect()
}

/// Number of leading steps on which all of `operands` are defined.
fn defined_len(operands: &[&Formula], horizon: usize) -> usize {
    let lead = operands.iter().map(|f| f.lead()).max().unwrap_or(0);
    horizon.saturating_sub(lead)
}

/// Last step covered by the windows of the first `len` output steps, after
/// checking that every such window is non-empty. `avail` is the number of
/// leading steps on which the operands are defined.
fn window_end(i: &Interval, len: usize, avail: usize) -> Result<usize> {
    let start = len - 1 + i.lower;
    if start >= avail {
        return Err(Error::EmptyWindow { start, horizon: avail });
    }
    Ok(match i.upper {
        Some(b) => (len - 1 + b).min(avail - 1),
        None => avail - 1,
    })
}

fn atom_value(a: &Atom, xi: &Trajectory, t: usize) -> f64 {
    let x = xi.get(t, a.var);
    match a.cmp {
        Comparison::Ge => x - a.threshold,
        Comparison::Le => a.threshold - x,
    }
}

fn check_var(a: &Atom, xi: &Trajectory) -> Result<()> {
    if a.var >= xi.n_vars() {
        return Err(Error::VariableOutOfRange { var: a.var, n_vars: xi.n_vars() });
    }
    Ok(())
}

/// `ρ(f, xi, t)` for `t in 0..len`.
pub fn signal(f: &Formula, xi: &Trajectory, len: usize) -> Result<Vec<f64>> {
    debug_assert!(len >= 1 && len <= xi.t_steps());
    let horizon = xi.t_steps();
    Ok(match f {
        Formula::True => vec![TRUE_ROBUSTNESS; len],
        Formula::Atom(a) => {
            check_var(a, xi)?;
            (0..len).map(|t| atom_value(a, xi, t)).collect()
        }
        Formula::Not(g) => {
            let mut s = signal(g, xi, len)?;
            s.iter_mut().for_each(|v| *v = -*v);
            s
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            let mut s = signal(a, xi, len)?;
            let r = signal(b, xi, len)?;
            let is_and = matches!(f, Formula::And(..));
            for (l, r) in s.iter_mut().zip(r) {
                *l = if is_and { l.min(r) } else { l.max(r) };
            }
            s
        }
        Formula::Eventually(i, g) | Formula::Globally(i, g) => {
            let end = window_end(i, len, defined_len(&[g], horizon))?;
            let child = signal(g, xi, end + 1)?;
            sliding_extreme(&child, len, i, matches!(f, Formula::Eventually(..)))
        }
        Formula::Until(i, lhs, rhs) => {
            let end = window_end(i, len, defined_len(&[lhs, rhs], horizon))?;
            let phi = signal(lhs, xi, end + 1)?;
            let psi = signal(rhs, xi, end + 1)?;
            let last = phi.len() - 1;
            (0..len)
                .map(|t| {
                    let stop = i.upper.map_or(last, |b| (t + b).min(last));
                    let mut best = f64::NEG_INFINITY;
                    let mut running = f64::INFINITY;
                    for tp in t..=stop {
                        running = running.min(phi[tp]);
                        if tp >= t + i.lower {
                            best = best.max(psi[tp].min(running));
                        }
                    }
                    best
                })
                .collect()
        }
    })
}

/// Max (`take_max`) or min of `s` over `[t + a, min(t + b, last)]` for
/// `t in 0..len`, via a monotone deque; both window ends are non-decreasing
/// in `t`.
fn sliding_extreme(s: &[f64], len: usize, i: &Interval, take_max: bool) -> Vec<f64> {
    let last = s.len() - 1;
    let better = |x: f64, y: f64| if take_max { x >= y } else { x <= y };
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = i.lower;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let end = i.upper.map_or(last, |b| (t + b).min(last));
        while next <= end {
            while let Some(&back) = dq.back() {
                if better(s[next], s[back]) {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(next);
            next += 1;
        }
        while let Some(&front) = dq.front() {
            if front < t + i.lower {
                dq.pop_front();
            } else {
                break;
            }
        }
        out.push(s[*dq.front().expect("window is non-empty")]);
    }
    out
}

/// Boolean satisfaction signal for `t in 0..len`.
pub fn bool_signal(f: &Formula, xi: &Trajectory, len: usize) -> Result<Vec<bool>> {
    let horizon = xi.t_steps();
    Ok(match f {
        Formula::True => vec![true; len],
        Formula::Atom(a) => {
            check_var(a, xi)?;
            (0..len)
                .map(|t| {
                    let x = xi.get(t, a.var);
                    match a.cmp {
                        Comparison::Ge => x >= a.threshold,
                        Comparison::Le => x <= a.threshold,
                    }
                })
                .collect()
        }
        Formula::Not(g) => bool_signal(g, xi, len)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let l = bool_signal(a, xi, len)?;
            let r = bool_signal(b, xi, len)?;
            l.into_iter().zip(r).map(|(x, y)| x && y).collect()
        }
        Formula::Or(a, b) => {
            let l = bool_signal(a, xi, len)?;
            let r = bool_signal(b, xi, len)?;
            l.into_iter().zip(r).map(|(x, y)| x || y).collect()
        }
        Formula::Eventually(i, g) | Formula::Globally(i, g) => {
            let end = window_end(i, len, defined_len(&[g], horizon))?;
            let child = bool_signal(g, xi, end + 1)?;
            let last = child.len() - 1;
            // prefix[k] = number of true samples before step k
            let mut prefix = vec![0usize; child.len() + 1];
            for (k, &b) in child.iter().enumerate() {
                prefix[k + 1] = prefix[k] + usize::from(b);
            }
            let eventually = matches!(f, Formula::Eventually(..));
            (0..len)
                .map(|t| {
                    let lo = t + i.lower;
                    let hi = i.upper.map_or(last, |b| (t + b).min(last));
                    let count = prefix[hi + 1] - prefix[lo];
                    if eventually {
                        count > 0
                    } else {
                        count == hi + 1 - lo
                    }
                })
                .collect()
        }
        Formula::Until(i, lhs, rhs) => {
            let end = window_end(i, len, defined_len(&[lhs, rhs], horizon))?;
            let phi = bool_signal(lhs, xi, end + 1)?;
            let psi = bool_signal(rhs, xi, end + 1)?;
            let last = phi.len() - 1;
            (0..len)
                .map(|t| {
                    let stop = i.upper.map_or(last, |b| (t + b).min(last));
                    for tp in t..=stop {
                        if !phi[tp] {
                            return false;
                        }
                        if tp >= t + i.lower && psi[tp] {
                            return true;
                        }
                    }
                    false
                })
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x0(values: &[f64]) -> Trajectory {
        Trajectory::univariate(values.to_vec()).unwrap()
    }

    #[test]
    fn atom_on_constant_signal() {
        let xi = x0(&[2.5; 4]);
        let f = Formula::ge(0, 0.0);
        assert_eq!(robustness(&f, &xi, 0).unwrap(), 2.5);
        assert!(satisfaction(&f, &xi, 0).unwrap());
        assert_eq!(robustness(&Formula::not(f.clone()), &xi, 0).unwrap(), -2.5);
        assert!(!satisfaction(&Formula::not(f), &xi, 0).unwrap());
    }

    #[test]
    fn globally_takes_window_minimum() {
        let xi = x0(&[1.0, 3.0, -2.0]);
        let f = Formula::globally(Interval::bounded(0, 2), Formula::ge(0, 0.0));
        assert_eq!(robustness(&f, &xi, 0).unwrap(), -2.0);
    }

    #[test]
    fn until_on_three_samples() {
        let xi = x0(&[1.0, 3.0, -2.0]);
        let f = Formula::until(Interval::bounded(0, 2), Formula::ge(0, 0.0), Formula::ge(0, 2.0));
        // t'=0: min(-1, 1) = -1; t'=1: min(1, min(1,3)) = 1; t'=2: min(-4, -2) = -4
        assert_eq!(robustness(&f, &xi, 0).unwrap(), 1.0);
        assert!(satisfaction(&f, &xi, 0).unwrap());
    }

    #[test]
    fn windows_clip_at_horizon() {
        let xi = x0(&[0.0, 1.0, 5.0]);
        let f = Formula::eventually(Interval::bounded(1, 10), Formula::ge(0, 0.0));
        assert_eq!(robustness(&f, &xi, 0).unwrap(), 5.0);
        assert_eq!(robustness(&f, &xi, 1).unwrap(), 5.0);
        let g = Formula::globally(Interval::unbounded(0), Formula::ge(0, 0.0));
        assert_eq!(robustness(&g, &xi, 1).unwrap(), 1.0);
    }

    #[test]
    fn outer_windows_clip_to_operand_domain() {
        // G[2,inf] is defined on t < 3; F[0,inf] ranges over t = 0, 1, 2
        let xi = x0(&[9.0, 9.0, -1.0, 4.0, 2.0]);
        let inner = Formula::globally(Interval::unbounded(2), Formula::ge(0, 0.0));
        let f = Formula::eventually(Interval::unbounded(0), inner.clone());
        // inner: t=0 -> min(-1,4,2) = -1, t=1 -> min(4,2) = 2, t=2 -> 2
        assert_eq!(robustness(&inner, &xi, 1).unwrap(), 2.0);
        assert_eq!(robustness(&f, &xi, 0).unwrap(), 2.0);
        assert!(satisfaction(&f, &xi, 0).unwrap());
        assert!(matches!(robustness(&inner, &xi, 3), Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn empty_window_is_an_error() {
        let xi = x0(&[0.0, 1.0, 5.0]);
        let f = Formula::eventually(Interval::bounded(3, 4), Formula::ge(0, 0.0));
        assert!(matches!(robustness(&f, &xi, 0), Err(Error::EmptyWindow { start: 3, horizon: 3 })));
        let g = Formula::eventually(Interval::bounded(2, 4), Formula::ge(0, 0.0));
        assert!(robustness(&g, &xi, 0).is_ok());
        assert!(robustness(&g, &xi, 1).is_err());
        assert!(matches!(robustness(&g, &xi, 3), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn variable_out_of_range() {
        let xi = x0(&[0.0]);
        assert!(matches!(
            robustness(&Formula::ge(1, 0.0), &xi, 0),
            Err(Error::VariableOutOfRange { var: 1, n_vars: 1 })
        ));
    }

    #[test]
    fn true_constant_uses_large_finite_value() {
        let xi = x0(&[0.0]);
        assert_eq!(robustness(&Formula::True, &xi, 0).unwrap(), TRUE_ROBUSTNESS);
        assert!(satisfaction(&Formula::True, &xi, 0).unwrap());
    }

    #[test]
    fn vector_matches_loop_and_negation() {
        let batch = TrajectoryBatch::new(vec![x0(&[1.0, 2.0]), x0(&[-1.0, 0.5]), x0(&[3.0, -3.0])])
            .unwrap();
        let f = Formula::eventually(Interval::bounded(0, 1), Formula::le(0, 0.7));
        let v = robustness_vector(&f, &batch).unwrap();
        assert_eq!(v.len(), 3);
        let lp: Vec<f64> = batch.iter().map(|x| robustness(&f, x, 0).unwrap()).collect();
        assert_eq!(v.values, lp);
        let n = robustness_vector(&Formula::not(f), &batch).unwrap();
        for (a, b) in v.values.iter().zip(&n.values) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn sliding_extreme_matches_scan() {
        let s = [3.0, -1.0, 4.0, 1.0, -5.0, 9.0, 2.0, 6.0];
        for lower in 0..4 {
            for upper in [Some(lower), Some(lower + 2), Some(lower + 5), None] {
                let i = Interval::new(lower, upper).unwrap();
                let len = s.len() - lower;
                for take_max in [true, false] {
                    let got = sliding_extreme(&s, len, &i, take_max);
                    for t in 0..len {
                        let hi = upper.map_or(s.len() - 1, |b| (t + b).min(s.len() - 1));
                        let w = &s[t + lower..=hi];
                        let want = if take_max {
                            w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        } else {
                            w.iter().cloned().fold(f64::INFINITY, f64::min)
                        };
                        assert_eq!(got[t], want);
                    }
                }
            }
        }
    }
}
