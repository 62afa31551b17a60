//! Named parameter tensors in a fixed order.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::scalar::Scalar;

pub const TOK_EMB: usize = 0;
pub const POS_EMB: usize = 1;
const FIRST_LAYER: usize = 2;

/// Offsets of a layer's tensors relative to its first tensor.
pub mod layer {
    pub const SA_WQ: usize = 0;
    pub const SA_BQ: usize = 1;
    pub const SA_WK: usize = 2;
    pub const SA_BK: usize = 3;
    pub const SA_WV: usize = 4;
    pub const SA_BV: usize = 5;
    pub const SA_WO: usize = 6;
    pub const SA_BO: usize = 7;
    pub const LN1_G: usize = 8;
    pub const LN1_B: usize = 9;
    pub const CA_WQ: usize = 10;
    pub const CA_BQ: usize = 11;
    pub const CA_WK: usize = 12;
    pub const CA_BK: usize = 13;
    pub const CA_WV: usize = 14;
    pub const CA_BV: usize = 15;
    pub const CA_WO: usize = 16;
    pub const CA_BO: usize = 17;
    pub const LN2_G: usize = 18;
    pub const LN2_B: usize = 19;
    pub const FF_W1: usize = 20;
    pub const FF_B1: usize = 21;
    pub const FF_W2: usize = 22;
    pub const FF_B2: usize = 23;
    pub const LN3_G: usize = 24;
    pub const LN3_B: usize = 25;
    pub const COUNT: usize = 26;

    pub const NAMES: [&str; COUNT] = [
        "self_attn.w_q", "self_attn.b_q", "self_attn.w_k", "self_attn.b_k", "self_attn.w_v", "self_attn.b_v",
        "self_attn.w_o", "self_attn.b_o", "norm1.gain", "norm1.bias", "cross_attn.w_q", "cross_attn.b_q",
        "cross_attn.w_k", "cross_attn.b_k", "cross_attn.w_v", "cross_attn.b_v", "cross_attn.w_o",
        "cross_attn.b_o", "norm2.gain", "norm2.bias", "ffn.w_1", "ffn.b_1", "ffn.w_2", "ffn.b_2", "norm3.gain",
        "norm3.bias",
    ];
}

pub fn layer_base(l: usize) -> usize {
    FIRST_LAYER + l * layer::COUNT
}

pub fn out_w(cfg: &ModelConfig) -> usize {
    layer_base(cfg.n_layers)
}

pub fn out_b(cfg: &ModelConfig) -> usize {
    layer_base(cfg.n_layers) + 1
}

/// Name and `(rows, cols)` shape of every tensor; vectors are single rows.
pub fn layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut out = vec![
        ("token_embedding".to_string(), (v, d)),
        ("position_embedding".to_string(), (cfg.max_seq_len, d)),
    ];
    for l in 0..cfg.n_layers {
        for (k, name) in layer::NAMES.iter().enumerate() {
            let shape = match k {
                layer::FF_W1 => (d, f),
                layer::FF_B1 => (1, f),
                layer::FF_W2 => (f, d),
                layer::SA_WQ | layer::SA_WK | layer::SA_WV | layer::SA_WO => (d, d),
                layer::CA_WQ | layer::CA_WK | layer::CA_WV | layer::CA_WO => (d, d),
                _ => (1, d),
            };
            out.push((format!("layers.{l}.{name}"), shape));
        }
    }
    out.push(("output.weight".to_string(), (d, v)));
    out.push(("output.bias".to_string(), (1, v)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Array2<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (names, tensors) = layout(cfg)
            .into_iter()
            .map(|(n, s)| (n, Array2::zeros(s)))
            .unzip();
        Params { names, tensors }
    }

    /// Weights `N(0, 0.02²)`, biases 0, norm gains 1.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
            if name.ends_with(".gain") {
                t.fill(T::one());
            } else if t.nrows() > 1 {
                t.mapv_inplace(|_| T::lit(normal.sample(rng)));
            }
        }
        p
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.mapv(|x| U::lit(x.as_f64()))).collect(),
        }
    }

    /// Whether weight decay applies (matrices, not biases or norm gains).
    pub fn decays(&self, i: usize) -> bool {
        self.tensors[i].nrows() > 1
    }

    pub fn zip_mut(&mut self, other: &Params<T>, mut f: impl FnMut(&mut T, T)) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.zip_mut_with(b, |x, &y| f(x, y));
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum()
    }

    pub fn scale(&mut self, c: T) {
        for t in &mut self.tensors {
            t.mapv_inplace(|x| x * c);
        }
    }
}
