//! Exact Gaussian-process regression with a Matérn-5/2 covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{MiningError, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;
const MIN_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPConfig {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
    /// Constant prior mean.
    pub prior_mean: f64,
    /// Re-select hyperparameters by marginal likelihood at refits.
    pub fit_hyperparams: bool,
}

impl Default for GPConfig {
    fn default() -> Self {
        GPConfig {
            signal_variance: 1.0,
            lengthscale: 1.0,
            noise_variance: 1e-6,
            prior_mean: 0.0,
            fit_hyperparams: false,
        }
    }
}

impl GPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.lengthscale > 0.0 && self.noise_variance >= 0.0) {
            return Err(MiningError::InvalidConfig(
                "signal variance and lengthscale must be positive, noise non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Covariance at distance `r`.
    pub fn matern(&self, r: f64) -> f64 {
        let s = SQRT5 * r / self.lengthscale;
        self.signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
    }

    /// `∇_x k(x, z)` for `r = |x - z|`, as a multiple of `x - z`.
    fn matern_grad_factor(&self, r: f64) -> f64 {
        let l = self.lengthscale;
        let s = SQRT5 * r / l;
        -self.signal_variance * 5.0 / (3.0 * l * l) * (1.0 + s) * (-s).exp()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct GPPosterior {
    pub cfg: GPConfig,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
}

/// Prediction with the gradients of mean and variance w.r.t. the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    pub grad_mean: Vec<f64>,
    pub grad_variance: Vec<f64>,
}

/// Rejects factors whose pivots have collapsed to rounding noise.
fn well_conditioned(c: &Cholesky<f64, Dyn>, scale: f64) -> bool {
    c.l_dirty().diagonal().iter().all(|d| d * d >= MIN_PIVOT * scale)
}

pub fn gp_fit(x: Vec<Vec<f64>>, y: Vec<f64>, cfg: &GPConfig) -> Result<GPPosterior> {
    cfg.validate()?;
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(MiningError::ShapeMismatch(format!("{n} inputs with {} targets", y.len())));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(MiningError::ShapeMismatch("inputs of different dimensions".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MiningError::InvalidConfig("GP targets must be finite".into()));
    }
    let k = DMatrix::from_fn(n, n, |i, j| cfg.matern(dist(&x[i], &x[j])));
    let mut jitter = 0.0;
    let chol = loop {
        let mut kn = k.clone();
        for i in 0..n {
            kn[(i, i)] += cfg.noise_variance + jitter;
        }
        if let Some(c) = Cholesky::new(kn).filter(|c| well_conditioned(c, cfg.signal_variance)) {
            break c;
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(MiningError::IllConditioned { jitter: jitter / 10.0 });
        }
    };
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - cfg.prior_mean));
    let alpha = chol.solve(&resid);
    Ok(GPPosterior {
        cfg: cfg.clone(),
        x,
        y,
        chol,
        alpha,
        jitter,
    })
}

impl GPPosterior {
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn cross(&self, q: &[f64]) -> (Vec<f64>, DVector<f64>) {
        let r: Vec<f64> = self.x.iter().map(|xi| dist(q, xi)).collect();
        let k = DVector::from_iterator(r.len(), r.iter().map(|&d| self.cfg.matern(d)));
        (r, k)
    }

    /// Posterior mean and variance (clamped at 0).
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let (_, k) = self.cross(q);
        let mean = self.cfg.prior_mean + k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("factor is non-singular");
        (mean, (self.cfg.signal_variance - v.dot(&v)).max(0.0))
    }

    pub fn predict_with_grad(&self, q: &[f64]) -> Prediction {
        let (r, k) = self.cross(q);
        let mean = self.cfg.prior_mean + k.dot(&self.alpha);
        let w = self.chol.solve(&k);
        let variance = (self.cfg.signal_variance - k.dot(&w)).max(0.0);
        let mut grad_mean = vec![0.0; q.len()];
        let mut grad_variance = vec![0.0; q.len()];
        for (i, xi) in self.x.iter().enumerate() {
            let f = self.cfg.matern_grad_factor(r[i]);
            let (gm, gv) = (self.alpha[i] * f, -2.0 * w[i] * f);
            for d in 0..q.len() {
                let diff = q[d] - xi[d];
                grad_mean[d] += gm * diff;
                grad_variance[d] += gv * diff;
            }
        }
        Prediction {
            mean,
            variance,
            grad_mean,
            grad_variance,
        }
    }

    /// Log marginal likelihood of the targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let resid = DVector::from_iterator(self.y.len(), self.y.iter().map(|v| v - self.cfg.prior_mean));
        let log_det: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * resid.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Median Euclidean distance over all pairs of rows.
pub fn median_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = (0..x.len())
        .flat_map(|i| (i + 1..x.len()).map(move |j| (i, j)))
        .map(|(i, j)| dist(&x[i], &x[j]))
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Refits over a multiplicative grid of lengthscales and signal variances
/// around `cfg`, keeping the best marginal likelihood.
pub fn gp_fit_hyperparams(x: Vec<Vec<f64>>, y: Vec<f64>, cfg: &GPConfig) -> Result<GPPosterior> {
    let mut best: Option<GPPosterior> = None;
    for ls in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for sv in [0.25, 1.0, 4.0] {
            let c = GPConfig {
                lengthscale: cfg.lengthscale * ls,
                signal_variance: cfg.signal_variance * sv,
                ..cfg.clone()
            };
            let Ok(post) = gp_fit(x.clone(), y.clone(), &c) else {
                continue;
            };
            if best
                .as_ref()
                .is_none_or(|b| post.log_marginal_likelihood() > b.log_marginal_likelihood())
            {
                best = Some(post);
            }
        }
    }
    match best {
        Some(b) => Ok(b),
        None => gp_fit(x, y, cfg),
    }
}
