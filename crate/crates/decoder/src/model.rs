//! Post-norm decoder with causal self-attention and cross-attention over the
//! formula embedding, with an explicit backward pass.
//!
//! Each layer computes
//!
//! ```text
//! x1 = norm1(x  + dropout(self_attn(x)))
//! x2 = norm2(x1 + dropout(cross_attn(x1, memory)))
//! x3 = norm3(x2 + dropout(ffn(x2)))
//! ```
//!
//! where `memory` is the embedding reshaped to `memory_slots x d_model` and
//! `ffn` is `gelu(x W1 + b1) W2 + b2`. Input rows are token plus learned
//! position embeddings; output logits come from a separate projection.
//!
//! Batches are packed without padding: all sequences are concatenated for
//! the dense layers and attention runs per sequence.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{DecoderError, Result};
use crate::ops::{
    attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward,
    NormCache, Span,
};
use crate::params::{self, layer as L, Params};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub cfg: ModelConfig,
    pub params: Params<T>,
}

struct AttnCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    o: Array2<T>,
}

struct LayerCache<T> {
    x: Array2<T>,
    sa: AttnCache<T>,
    drop1: Option<Array2<T>>,
    ln1: NormCache<T>,
    x1: Array2<T>,
    ca: AttnCache<T>,
    drop2: Option<Array2<T>>,
    ln2: NormCache<T>,
    x2: Array2<T>,
    ff_h: Array2<T>,
    ff_g: Array2<T>,
    drop3: Option<Array2<T>>,
    ln3: NormCache<T>,
}

/// Activations kept from a forward pass for [`Model::backward`].
pub struct ForwardCache<T> {
    tokens: Vec<u32>,
    positions: Vec<usize>,
    spans: Vec<Span>,
    mem_spans: Vec<Span>,
    memory: Array2<T>,
    layers: Vec<LayerCache<T>>,
    x_final: Array2<T>,
}

/// Sequences padded to a common width; only the first `lengths[b]` tokens of
/// row `b` are read.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub tokens: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn from_sequences(seqs: &[&[u32]], pad: u32) -> Self {
        let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        PaddedBatch {
            tokens: seqs
                .iter()
                .map(|s| {
                    let mut row = s.to_vec();
                    row.resize(width, pad);
                    row
                })
                .collect(),
            lengths: seqs.iter().map(|s| s.len()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.lengths.iter().map(|&l| l.saturating_sub(1)).sum()
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p` (resolved to
/// 2^-32) and `1 / (1 - p)` otherwise.
fn dropout_mask<T: Scalar>(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<T> {
    let keep = T::lit(1.0 / (1.0 - p));
    let cut = (p * 4_294_967_296.0) as u64;
    let data = (0..shape.0 * shape.1)
        .map(|_| if (rng.next_u32() as u64) < cut { T::zero() } else { keep })
        .collect();
    Array2::from_shape_vec(shape, data).expect("shape matches length")
}

fn acc<T: Scalar>(g: &mut Params<T>, i: usize, d: &Array2<T>) {
    g.tensors[i] += d;
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let params = Params::init(&cfg, rng);
        Ok(Model { cfg, params })
    }

    pub fn from_params(cfg: ModelConfig, params: Params<T>) -> Result<Self> {
        cfg.validate()?;
        let want = params::layout(&cfg);
        if want.len() != params.tensors.len()
            || want
                .iter()
                .zip(params.names.iter().zip(&params.tensors))
                .any(|((n, s), (m, t))| n != m || *s != t.dim())
        {
            return Err(DecoderError::ShapeMismatch("parameters do not match the model layout".into()));
        }
        Ok(Model { cfg, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }

    pub(crate) fn p(&self, i: usize) -> &Array2<T> {
        &self.params.tensors[i]
    }

    fn check_inputs(&self, seqs: &[&[u32]], mems: &[&[T]]) -> Result<()> {
        if seqs.len() != mems.len() || seqs.is_empty() {
            return Err(DecoderError::ShapeMismatch(format!(
                "{} sequences with {} embeddings",
                seqs.len(),
                mems.len()
            )));
        }
        for s in seqs {
            if s.is_empty() || s.len() > self.cfg.max_seq_len {
                return Err(DecoderError::ShapeMismatch(format!(
                    "sequence length {} outside 1..={}",
                    s.len(),
                    self.cfg.max_seq_len
                )));
            }
            if let Some(&t) = s.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
                return Err(DecoderError::ShapeMismatch(format!("token id {t} outside the vocabulary")));
            }
        }
        if let Some(m) = mems.iter().find(|m| m.len() != self.cfg.embedding_dim()) {
            return Err(DecoderError::ShapeMismatch(format!(
                "embedding of length {} for a model expecting {}",
                m.len(),
                self.cfg.embedding_dim()
            )));
        }
        Ok(())
    }

    /// Logits (`len x vocab_size`) for one sequence in eval mode.
    pub fn forward(&self, tokens: &[u32], e: &[T]) -> Result<Array2<T>> {
        Ok(self.forward_packed(&[tokens], &[e], None)?.0)
    }

    /// Logits for one sequence with dropout active.
    pub fn forward_train(&self, tokens: &[u32], e: &[T], rng: &mut ChaCha8Rng) -> Result<Array2<T>> {
        Ok(self.forward_packed(&[tokens], &[e], Some(rng))?.0)
    }

    /// Packed forward pass; `dropout` enables train mode.
    pub fn forward_packed(
        &self,
        seqs: &[&[u32]],
        mems: &[&[T]],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_inputs(seqs, mems)?;
        let cfg = &self.cfg;
        let (d, m) = (cfg.d_model, cfg.memory_slots);
        let mut spans = Vec::with_capacity(seqs.len());
        let mut tokens = Vec::new();
        let mut positions = Vec::new();
        for s in seqs {
            spans.push(Span {
                off: tokens.len(),
                len: s.len(),
            });
            tokens.extend_from_slice(s);
            positions.extend(0..s.len());
        }
        let mem_spans: Vec<Span> = (0..seqs.len()).map(|b| Span { off: b * m, len: m }).collect();
        let mut memory = Array2::zeros((seqs.len() * m, d));
        for (b, e) in mems.iter().enumerate() {
            let view = ArrayView2::from_shape((m, d), e).expect("checked length");
            memory.slice_mut(s![b * m..(b + 1) * m, ..]).assign(&view);
        }

        let tok = self.p(params::TOK_EMB);
        let pos = self.p(params::POS_EMB);
        let mut x = Array2::zeros((tokens.len(), d));
        for (i, (&t, &p)) in tokens.iter().zip(&positions).enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&tok.row(t as usize));
            row += &pos.row(p);
        }

        let p_drop = cfg.dropout;
        let mut mask = |shape: (usize, usize)| -> Option<Array2<T>> {
            match dropout.as_deref_mut() {
                Some(rng) if p_drop > 0.0 => Some(dropout_mask(shape, p_drop, rng)),
                _ => None,
            }
        };

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let base = params::layer_base(l);
            let w = |k: usize| self.p(base + k);

            let xv = x.view();
            let q = linear(&xv, w(L::SA_WQ), w(L::SA_BQ));
            let k = linear(&xv, w(L::SA_WK), w(L::SA_BK));
            let v = linear(&xv, w(L::SA_WV), w(L::SA_BV));
            let (o, probs) = attention(&q, &k, &v, &spans, &spans, cfg.n_heads, true);
            let mut a = linear(&o.view(), w(L::SA_WO), w(L::SA_BO));
            let drop1 = mask(a.dim());
            if let Some(mk) = &drop1 {
                a *= mk;
            }
            a += &x;
            let (x1, ln1) = layer_norm(&a, w(L::LN1_G), w(L::LN1_B));
            let sa = AttnCache { q, k, v, probs, o };

            let x1v = x1.view();
            let mv = memory.view();
            let q = linear(&x1v, w(L::CA_WQ), w(L::CA_BQ));
            let k = linear(&mv, w(L::CA_WK), w(L::CA_BK));
            let v = linear(&mv, w(L::CA_WV), w(L::CA_BV));
            let (o, probs) = attention(&q, &k, &v, &spans, &mem_spans, cfg.n_heads, false);
            let mut c = linear(&o.view(), w(L::CA_WO), w(L::CA_BO));
            let drop2 = mask(c.dim());
            if let Some(mk) = &drop2 {
                c *= mk;
            }
            c += &x1;
            let (x2, ln2) = layer_norm(&c, w(L::LN2_G), w(L::LN2_B));
            let ca = AttnCache { q, k, v, probs, o };

            let ff_h = linear(&x2.view(), w(L::FF_W1), w(L::FF_B1));
            let ff_g = ff_h.mapv(gelu);
            let mut f = linear(&ff_g.view(), w(L::FF_W2), w(L::FF_B2));
            let drop3 = mask(f.dim());
            if let Some(mk) = &drop3 {
                f *= mk;
            }
            f += &x2;
            let (x3, ln3) = layer_norm(&f, w(L::LN3_G), w(L::LN3_B));

            layers.push(LayerCache {
                x,
                sa,
                drop1,
                ln1,
                x1,
                ca,
                drop2,
                ln2,
                x2,
                ff_h,
                ff_g,
                drop3,
                ln3,
            });
            x = x3;
        }
        let logits = linear(&x.view(), self.p(params::out_w(cfg)), self.p(params::out_b(cfg)));
        Ok((
            logits,
            ForwardCache {
                tokens,
                positions,
                spans,
                mem_spans,
                memory,
                layers,
                x_final: x,
            },
        ))
    }

    /// Parameter gradients given the gradient of the loss w.r.t. the logits.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Array2<T>) -> Params<T> {
        let cfg = &self.cfg;
        let mut g = Params::zeros(cfg);
        let (dw, db, dx) = linear_backward(&cache.x_final.view(), self.p(params::out_w(cfg)), dlogits, true);
        acc(&mut g, params::out_w(cfg), &dw);
        acc(&mut g, params::out_b(cfg), &db);
        let mut dx = dx.expect("requested");

        for l in (0..cfg.n_layers).rev() {
            let base = params::layer_base(l);
            let w = |k: usize| self.p(base + k);
            let c = &cache.layers[l];

            // norm3 and feed-forward
            let (dg, dbias, dr) = layer_norm_backward(&dx, &c.ln3, w(L::LN3_G));
            acc(&mut g, base + L::LN3_G, &dg);
            acc(&mut g, base + L::LN3_B, &dbias);
            let mut dx2 = dr.clone();
            let mut df = dr;
            if let Some(mk) = &c.drop3 {
                df *= mk;
            }
            let (dw2, db2, dgel) = linear_backward(&c.ff_g.view(), w(L::FF_W2), &df, true);
            acc(&mut g, base + L::FF_W2, &dw2);
            acc(&mut g, base + L::FF_B2, &db2);
            let mut dh = dgel.expect("requested");
            dh.zip_mut_with(&c.ff_h, |d, &h| *d *= gelu_grad(h));
            let (dw1, db1, dxf) = linear_backward(&c.x2.view(), w(L::FF_W1), &dh, true);
            acc(&mut g, base + L::FF_W1, &dw1);
            acc(&mut g, base + L::FF_B1, &db1);
            dx2 += &dxf.expect("requested");

            // norm2 and cross-attention
            let (dg, dbias, dr) = layer_norm_backward(&dx2, &c.ln2, w(L::LN2_G));
            acc(&mut g, base + L::LN2_G, &dg);
            acc(&mut g, base + L::LN2_B, &dbias);
            let mut dx1 = dr.clone();
            let mut dc = dr;
            if let Some(mk) = &c.drop2 {
                dc *= mk;
            }
            let (dwo, dbo, do_) = linear_backward(&c.ca.o.view(), w(L::CA_WO), &dc, true);
            acc(&mut g, base + L::CA_WO, &dwo);
            acc(&mut g, base + L::CA_BO, &dbo);
            let (dq, dk, dv) = attention_backward(
                &do_.expect("requested"),
                &c.ca.q,
                &c.ca.k,
                &c.ca.v,
                &c.ca.probs,
                &cache.spans,
                &cache.mem_spans,
                cfg.n_heads,
            );
            let (dwq, dbq, dxq) = linear_backward(&c.x1.view(), w(L::CA_WQ), &dq, true);
            acc(&mut g, base + L::CA_WQ, &dwq);
            acc(&mut g, base + L::CA_BQ, &dbq);
            dx1 += &dxq.expect("requested");
            let (dwk, dbk, _) = linear_backward(&cache.memory.view(), w(L::CA_WK), &dk, false);
            acc(&mut g, base + L::CA_WK, &dwk);
            acc(&mut g, base + L::CA_BK, &dbk);
            let (dwv, dbv, _) = linear_backward(&cache.memory.view(), w(L::CA_WV), &dv, false);
            acc(&mut g, base + L::CA_WV, &dwv);
            acc(&mut g, base + L::CA_BV, &dbv);

            // norm1 and self-attention
            let (dg, dbias, dr) = layer_norm_backward(&dx1, &c.ln1, w(L::LN1_G));
            acc(&mut g, base + L::LN1_G, &dg);
            acc(&mut g, base + L::LN1_B, &dbias);
            let mut dxin = dr.clone();
            let mut da = dr;
            if let Some(mk) = &c.drop1 {
                da *= mk;
            }
            let (dwo, dbo, do_) = linear_backward(&c.sa.o.view(), w(L::SA_WO), &da, true);
            acc(&mut g, base + L::SA_WO, &dwo);
            acc(&mut g, base + L::SA_BO, &dbo);
            let (dq, dk, dv) = attention_backward(
                &do_.expect("requested"),
                &c.sa.q,
                &c.sa.k,
                &c.sa.v,
                &c.sa.probs,
                &cache.spans,
                &cache.spans,
                cfg.n_heads,
            );
            for (dy, wi, bi) in [(&dq, L::SA_WQ, L::SA_BQ), (&dk, L::SA_WK, L::SA_BK), (&dv, L::SA_WV, L::SA_BV)] {
                let (dw, db, dxi) = linear_backward(&c.x.view(), w(wi), dy, true);
                acc(&mut g, base + wi, &dw);
                acc(&mut g, base + bi, &db);
                dxin += &dxi.expect("requested");
            }
            dx = dxin;
        }

        let (tok, pos) = (params::TOK_EMB, params::POS_EMB);
        for (i, (&t, &p)) in cache.tokens.iter().zip(&cache.positions).enumerate() {
            let row = dx.row(i);
            let mut gt = g.tensors[tok].row_mut(t as usize);
            gt += &row;
            let mut gp = g.tensors[pos].row_mut(p);
            gp += &row;
        }
        g
    }

    /// Mean next-token cross-entropy over the unpadded targets of `batch`,
    /// and optionally its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &PaddedBatch,
        mems: &[&[T]],
        dropout: Option<&mut ChaCha8Rng>,
        want_grad: bool,
    ) -> Result<(f64, Option<Params<T>>)> {
        if batch.lengths.iter().any(|&l| l < 2) {
            return Err(DecoderError::ShapeMismatch("training sequences need at least 2 tokens".into()));
        }
        let inputs: Vec<&[u32]> = batch
            .tokens
            .iter()
            .zip(&batch.lengths)
            .map(|(t, &l)| &t[..l - 1])
            .collect();
        let targets: Vec<u32> = batch
            .tokens
            .iter()
            .zip(&batch.lengths)
            .flat_map(|(t, &l)| t[1..l].iter().copied())
            .collect();
        let (logits, cache) = self.forward_packed(&inputs, mems, dropout)?;
        let n = T::lit(targets.len() as f64);
        let mut loss = 0.0;
        let mut dlogits = logits;
        for (mut row, &y) in dlogits.axis_iter_mut(Axis(0)).zip(&targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.iter().copied().sum::<T>();
            loss -= (row[y as usize] / sum).ln().as_f64();
            row.mapv_inplace(|v| v / sum / n);
            row[y as usize] -= T::one() / n;
        }
        loss /= targets.len() as f64;
        let grad = want_grad.then(|| self.backward(&cache, &dlogits));
        Ok((loss, grad))
    }

    /// Eval-mode loss without gradients.
    pub fn loss(&self, batch: &PaddedBatch, mems: &[&[T]]) -> Result<f64> {
        Ok(self.loss_and_grad(batch, mems, None, false)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::VOCAB_SIZE;
    use rand::SeedableRng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            dropout: 0.1,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 12,
            memory_slots: 2,
        }
    }

    #[test]
    fn logits_shape() {
        let m: Model<f64> = Model::new(tiny(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let e = vec![0.1; 16];
        let out = m.forward(&[37, 1, 2, 3], &e).unwrap();
        assert_eq!(out.dim(), (4, VOCAB_SIZE));
    }

    #[test]
    fn rejects_bad_shapes() {
        let m: Model<f64> = Model::new(tiny(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(m.forward(&[37], &[0.0; 15]).is_err());
        assert!(m.forward(&[], &[0.0; 16]).is_err());
        assert!(m.forward(&[37; 13], &[0.0; 16]).is_err());
        assert!(m.forward(&[99], &[0.0; 16]).is_err());
    }

    #[test]
    fn packed_batch_equals_separate_sequences() {
        let m: Model<f64> = Model::new(tiny(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (a, b) = ([37u32, 4, 5], [37u32, 9, 9, 2, 1]);
        let (ea, eb) = (vec![0.3; 16], vec![-0.2; 16]);
        let (joint, _) = m.forward_packed(&[&a, &b], &[&ea, &eb], None).unwrap();
        let la = m.forward(&a, &ea).unwrap();
        let lb = m.forward(&b, &eb).unwrap();
        assert!((&joint.slice(s![0..3, ..]) - &la).iter().all(|v| v.abs() < 1e-12));
        assert!((&joint.slice(s![3..8, ..]) - &lb).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn loss_of_uniform_logits_is_log_vocab() {
        let mut m: Model<f64> = Model::new(tiny(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ow = params::out_w(&m.cfg);
        m.params.tensors[ow].fill(0.0);
        let batch = PaddedBatch::from_sequences(&[&[37, 1, 2, 38]], 36);
        let loss = m.loss(&batch, &[&[0.0; 16]]).unwrap();
        assert!((loss - (VOCAB_SIZE as f64).ln()).abs() < 1e-12);
    }
}
