//! Autoregressive generation with a per-layer key/value cache.

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stl_core::{Embedding, TokenSequence, Vocabulary};

use crate::checkpoint::Checkpoint;
use crate::config::{DecodeConfig, DecodeMode};
use crate::error::{DecoderError, Result};
use crate::model::Model;
use crate::ops::{attention, layer_norm, linear, Span};
use crate::params::{self, layer as L};
use crate::scalar::Scalar;

struct LayerKv<T> {
    k: Array2<T>,
    v: Array2<T>,
    mem_k: Array2<T>,
    mem_v: Array2<T>,
}

/// Incremental decoding state for one sequence.
pub struct KvCache<'m, T> {
    model: &'m Model<T>,
    layers: Vec<LayerKv<T>>,
    len: usize,
}

impl<'m, T: Scalar> KvCache<'m, T> {
    pub fn new(model: &'m Model<T>, e: &[T]) -> Result<Self> {
        let cfg = &model.cfg;
        if e.len() != cfg.embedding_dim() {
            return Err(DecoderError::ShapeMismatch(format!(
                "embedding of length {} for a model expecting {}",
                e.len(),
                cfg.embedding_dim()
            )));
        }
        let memory = ArrayView2::from_shape((cfg.memory_slots, cfg.d_model), e).expect("checked length");
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let w = |k: usize| model.p(params::layer_base(l) + k);
                LayerKv {
                    k: Array2::zeros((cfg.max_seq_len, cfg.d_model)),
                    v: Array2::zeros((cfg.max_seq_len, cfg.d_model)),
                    mem_k: linear(&memory, w(L::CA_WK), w(L::CA_BK)),
                    mem_v: linear(&memory, w(L::CA_WV), w(L::CA_BV)),
                }
            })
            .collect();
        Ok(KvCache { model, layers, len: 0 })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Feeds the next token and returns the logits for the position after it.
    pub fn step(&mut self, token: u32) -> Result<Vec<T>> {
        let model = self.model;
        let cfg = &model.cfg;
        if self.len >= cfg.max_seq_len {
            return Err(DecoderError::ShapeMismatch(format!("sequence exceeds max_seq_len {}", cfg.max_seq_len)));
        }
        if token as usize >= cfg.vocab_size {
            return Err(DecoderError::ShapeMismatch(format!("token id {token} outside the vocabulary")));
        }
        let pos = self.len;
        let n = pos + 1;
        let mut x = Array2::zeros((1, cfg.d_model));
        x.row_mut(0).assign(&model.p(params::TOK_EMB).row(token as usize));
        x.row_mut(0).scaled_add(T::one(), &model.p(params::POS_EMB).row(pos));
        let one = [Span { off: 0, len: 1 }];
        let keys = [Span { off: 0, len: n }];
        let mem = [Span { off: 0, len: cfg.memory_slots }];

        for (l, kv) in self.layers.iter_mut().enumerate() {
            let w = |k: usize| model.p(params::layer_base(l) + k);
            let xv = x.view();
            let q = linear(&xv, w(L::SA_WQ), w(L::SA_BQ));
            kv.k.row_mut(pos).assign(&linear(&xv, w(L::SA_WK), w(L::SA_BK)).row(0));
            kv.v.row_mut(pos).assign(&linear(&xv, w(L::SA_WV), w(L::SA_BV)).row(0));
            let k = kv.k.slice(s![..n, ..]).to_owned();
            let v = kv.v.slice(s![..n, ..]).to_owned();
            let (o, _) = attention(&q, &k, &v, &one, &keys, cfg.n_heads, false);
            let mut a = linear(&o.view(), w(L::SA_WO), w(L::SA_BO));
            a += &x;
            let (x1, _) = layer_norm(&a, w(L::LN1_G), w(L::LN1_B));

            let q = linear(&x1.view(), w(L::CA_WQ), w(L::CA_BQ));
            let (o, _) = attention(&q, &kv.mem_k, &kv.mem_v, &one, &mem, cfg.n_heads, false);
            let mut c = linear(&o.view(), w(L::CA_WO), w(L::CA_BO));
            c += &x1;
            let (x2, _) = layer_norm(&c, w(L::LN2_G), w(L::LN2_B));

            let h = linear(&x2.view(), w(L::FF_W1), w(L::FF_B1)).mapv(crate::ops::gelu);
            let mut f = linear(&h.view(), w(L::FF_W2), w(L::FF_B2));
            f += &x2;
            x = layer_norm(&f, w(L::LN3_G), w(L::LN3_B)).0;
        }
        self.len = n;
        let logits = linear(&x.view(), model.p(params::out_w(cfg)), model.p(params::out_b(cfg)));
        Ok(logits.into_raw_vec_and_offset().0)
    }
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample<T: Scalar>(logits: &[T], tau: f64, rng: &mut impl Rng) -> usize {
    let max = logits.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|x| ((x.as_f64() - max) / tau).exp()).collect();
    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

/// Generated token ids after `bos`, without the terminating `eos`. Stops at
/// `eos`, at `max_length` tokens, or when the context is full.
pub fn generate<T: Scalar>(model: &Model<T>, e: &[T], dcfg: &DecodeConfig, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    dcfg.validate()?;
    let vocab = Vocabulary::stl();
    let mut cache = KvCache::new(model, e)?;
    let limit = dcfg.max_length.min(model.cfg.max_seq_len);
    let mut out = Vec::new();
    let mut next = vocab.bos;
    while out.len() < limit {
        let logits = cache.step(next)?;
        let tok = match dcfg.mode {
            DecodeMode::Greedy => argmax(&logits),
            DecodeMode::Temperature { tau } => sample(&logits, tau, rng),
        } as u32;
        if tok == vocab.eos {
            break;
        }
        out.push(tok);
        next = tok;
    }
    Ok(out)
}

/// Decodes each embedding to text in parallel. Sampling uses an independent
/// stream per input so that results do not depend on scheduling.
pub fn decode_texts(model: &Model<f32>, embeddings: &[Vec<f32>], dcfg: &DecodeConfig) -> Result<Vec<String>> {
    let vocab = Vocabulary::stl();
    embeddings
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
            rng.set_stream(i as u64);
            let ids = generate(model, e, dcfg, &mut rng)?;
            Ok(vocab.detokenize(&TokenSequence::new(ids)))
        })
        .collect()
}

pub fn embedding_f32(e: &Embedding) -> Vec<f32> {
    e.values.iter().map(|&v| v as f32).collect()
}

/// Decodes one embedding with a checkpoint; the text may fail to parse.
pub fn decode(e: &Embedding, ckpt: &Checkpoint, dcfg: &DecodeConfig) -> Result<String> {
    Ok(decode_many(std::slice::from_ref(e), ckpt, dcfg)?.remove(0))
}

pub fn decode_many(embeddings: &[Embedding], ckpt: &Checkpoint, dcfg: &DecodeConfig) -> Result<Vec<String>> {
    for e in embeddings {
        ckpt.check_compatible(&e.anchor_set_id)?;
    }
    let es: Vec<Vec<f32>> = embeddings.iter().map(embedding_f32).collect();
    decode_texts(&ckpt.model, &es, dcfg)
}
