//! Upper-confidence-bound acquisition maximized by multi-start gradient
//! ascent on the GP posterior.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MiningError, Result};
use crate::gp::GPPosterior;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UCBConfig {
    pub beta: f64,
    pub n_starts: usize,
    pub gd_steps: usize,
    /// Step length of each ascent move, in lengthscales.
    pub gd_lr: f64,
    pub candidates_per_iter: usize,
}

impl Default for UCBConfig {
    fn default() -> Self {
        UCBConfig {
            beta: 2.0,
            n_starts: 16,
            gd_steps: 50,
            gd_lr: 0.05,
            candidates_per_iter: 1,
        }
    }
}

impl UCBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 || self.gd_steps == 0 || self.n_starts == 0 || self.candidates_per_iter == 0 {
            return Err(MiningError::InvalidConfig(
                "beta must be >= 0 and gd_steps, n_starts, candidates_per_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub acquisition: f64,
    pub mean: f64,
    pub std: f64,
}

/// `mean + sqrt(beta) * std` and its gradient.
pub fn acquisition(post: &GPPosterior, beta: f64, x: &[f64]) -> (f64, Vec<f64>, f64, f64) {
    let p = post.predict_with_grad(x);
    let std = p.variance.sqrt();
    let sb = beta.sqrt();
    let grad = if std > 1e-12 && sb > 0.0 {
        p.grad_mean
            .iter()
            .zip(&p.grad_variance)
            .map(|(gm, gv)| gm + sb * gv / (2.0 * std))
            .collect()
    } else {
        p.grad_mean
    };
    (p.mean + sb * std, grad, p.mean, std)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Start points: half are the best observed input plus a perturbation of
/// about a tenth of a lengthscale, half are random directions scaled to the
/// median norm of the observed inputs.
fn starts(post: &GPPosterior, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let dim = post.dim();
    let best = post
        .y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| post.x[i].clone())
        .expect("posterior has data");
    let mut norms: Vec<f64> = post.x.iter().map(|x| norm(x)).collect();
    norms.sort_by(f64::total_cmp);
    let radius = norms[norms.len() / 2].max(1e-6);
    let jitter = 0.1 * post.cfg.lengthscale;
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                let dir = random_direction(dim, rng);
                best.iter().zip(dir).map(|(b, d)| b + jitter * d).collect()
            } else {
                random_direction(dim, rng).into_iter().map(|d| d * radius).collect()
            }
        })
        .collect()
}

fn ascend(post: &GPPosterior, cfg: &UCBConfig, mut x: Vec<f64>) -> Candidate {
    let step = cfg.gd_lr * post.cfg.lengthscale;
    let (mut a, mut g, mut m, mut s) = acquisition(post, cfg.beta, &x);
    let mut best = Candidate { x: x.clone(), acquisition: a, mean: m, std: s };
    for _ in 0..cfg.gd_steps {
        let gn = norm(&g);
        if gn < 1e-15 {
            break;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi += step * gi / gn);
        (a, g, m, s) = acquisition(post, cfg.beta, &x);
        if a > best.acquisition {
            best = Candidate { x: x.clone(), acquisition: a, mean: m, std: s };
        }
    }
    best
}

/// Distinct ascent end points, best first, at most `candidates_per_iter`.
pub fn ucb_maximize(post: &GPPosterior, cfg: &UCBConfig, rng: &mut impl Rng) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let mut found: Vec<Candidate> = starts(post, cfg.n_starts, rng)
        .into_iter()
        .map(|x0| ascend(post, cfg, x0))
        .collect();
    found.sort_by(|a, b| b.acquisition.total_cmp(&a.acquisition));
    let tol = 1e-6 * post.cfg.lengthscale;
    let mut out: Vec<Candidate> = Vec::new();
    for c in found {
        if out.len() == cfg.candidates_per_iter {
            break;
        }
        if out.iter().all(|o| norm(&o.x.iter().zip(&c.x).map(|(a, b)| a - b).collect::<Vec<_>>()) > tol) {
            out.push(c);
        }
    }
    Ok(out)
}
