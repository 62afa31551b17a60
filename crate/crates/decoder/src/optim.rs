//! Adam with decoupled weight decay.

use crate::config::TrainConfig;
use crate::params::Params;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    /// Number of updates applied so far.
    pub step: usize,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(like: &Params<T>) -> Self {
        let zeros = Params {
            names: like.names.clone(),
            tensors: like.tensors.iter().map(|t| ndarray::Array2::zeros(t.raw_dim())).collect(),
        };
        AdamW {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One update with learning rate `lr`; decay is applied only to matrices.
    pub fn update(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let (b1t, b2t) = (T::lit(b1), T::lit(b2));
        let (ib1, ib2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
        let step = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(cfg.eps);
        for i in 0..params.tensors.len() {
            let decay = if params.decays(i) {
                T::lit(1.0 - lr * cfg.weight_decay)
            } else {
                T::one()
            };
            let p = &mut params.tensors[i];
            let g = &grads.tensors[i];
            let m = &mut self.m.tensors[i];
            let v = &mut self.v.tensors[i];
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1t * *m + ib1 * g;
                *v = b2t * *v + ib2 * g * g;
                *p = *p * decay - step * *m / ((*v * inv_bc2).sqrt() + eps);
            });
        }
    }
}

/// Scales `grads` so that their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut Params<T>, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(T::lit(max_norm / (norm + 1e-6)));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = ModelConfig::micro();
        let mut p: Params<f64> = Params::zeros(&cfg);
        let mut g = Params::zeros(&cfg);
        for t in &mut g.tensors {
            t.fill(0.5);
        }
        let tc = TrainConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(&p);
        opt.update(&mut p, &g, 1e-3, &tc);
        // bias-corrected first step is lr * g / (|g| + eps)
        for t in &p.tensors {
            for &x in t {
                assert!((x + 1e-3 * 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decay_skips_vectors() {
        let cfg = ModelConfig::micro();
        let mut p: Params<f64> = Params::zeros(&cfg);
        for t in &mut p.tensors {
            t.fill(1.0);
        }
        let g = Params::zeros(&cfg);
        let tc = TrainConfig { weight_decay: 0.1, ..Default::default() };
        AdamW::new(&p).update(&mut p, &g, 0.5, &tc);
        for (i, t) in p.tensors.iter().enumerate() {
            let want = if t.nrows() > 1 { 0.95 } else { 1.0 };
            assert!(t.iter().all(|&x| (x - want).abs() < 1e-12), "tensor {i}");
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let cfg = ModelConfig::micro();
        let mut g: Params<f64> = Params::zeros(&cfg);
        for t in &mut g.tensors {
            t.fill(3.0);
        }
        let before = clip_grad_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!((g.sq_norm().sqrt() - 1.0).abs() < 1e-5);
    }
}
