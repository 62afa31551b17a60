use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stl_decoder::config::VOCAB_SIZE;
use stl_decoder::params::layout;
use stl_decoder::{Model, ModelConfig, PaddedBatch, Params};

const PAD: u32 = 36;
const BOS: u32 = 37;
const EOS: u32 = 38;

fn cfg(n_layers: usize) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads: 4,
        d_model: 32,
        d_ff: 64,
        dropout: 0.1,
        vocab_size: VOCAB_SIZE,
        max_seq_len: 40,
        memory_slots: 1,
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
    let mut t = vec![BOS];
    t.extend((1..len).map(|_| rng.random_range(0..35u32)));
    t
}

fn random_embedding(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

#[test]
fn causal_mask_blocks_future_tokens_at_every_depth() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n_layers in 1..=4 {
        let m: Model<f32> = Model::new(cfg(n_layers), &mut rng).unwrap();
        let e = random_embedding(&mut rng, 32);
        let toks = random_tokens(&mut rng, 24);
        let base = m.forward(&toks, &e).unwrap();
        for j in [1usize, 7, 23] {
            let mut changed = toks.clone();
            changed[j] = (changed[j] + 5) % 35;
            let out = m.forward(&changed, &e).unwrap();
            for i in 0..j {
                let scale = base.row(i).iter().fold(0f32, |a, v| a.max(v.abs()));
                let diff = base.row(i).iter().zip(out.row(i)).fold(0f32, |a, (x, y)| a.max((x - y).abs()));
                assert!(diff <= 1e-6 * scale, "layers {n_layers}, change at {j} leaked to {i}: {diff}");
            }
            let later = base.row(j).iter().zip(out.row(j)).any(|(x, y)| x != y);
            assert!(later, "position {j} ignores its own token");
        }
    }
}

#[test]
fn eval_mode_is_deterministic_and_train_mode_is_not() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m: Model<f32> = Model::new(cfg(2), &mut rng).unwrap();
    let e = random_embedding(&mut rng, 32);
    let toks = random_tokens(&mut rng, 15);
    assert_eq!(m.forward(&toks, &e).unwrap(), m.forward(&toks, &e).unwrap());
    let mut d = ChaCha8Rng::seed_from_u64(0);
    let a = m.forward_train(&toks, &e, &mut d).unwrap();
    let b = m.forward_train(&toks, &e, &mut d).unwrap();
    assert_ne!(a, b);
}

#[test]
fn distinct_embeddings_change_bos_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for slots in [1usize, 2] {
        let c = ModelConfig {
            memory_slots: slots,
            ..cfg(2)
        };
        let m: Model<f32> = Model::new(c.clone(), &mut rng).unwrap();
        let e1 = random_embedding(&mut rng, c.embedding_dim());
        let e2 = random_embedding(&mut rng, c.embedding_dim());
        let a = m.forward(&[BOS], &e1).unwrap();
        let b = m.forward(&[BOS], &e2).unwrap();
        let diff = a.iter().zip(b.iter()).fold(0f32, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(diff > 0.0);
    }
}

#[test]
fn tokens_under_padding_do_not_change_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let m: Model<f64> = Model::new(cfg(2), &mut rng).unwrap();
    let e1: Vec<f64> = (0..32).map(|i| (i as f64).cos()).collect();
    let e2: Vec<f64> = (0..32).map(|i| (i as f64 * 0.5).sin()).collect();
    let short = [BOS, 3, 4, EOS];
    let long = [BOS, 1, 2, 3, 4, 5, 6, 7, 8, EOS];
    let batch = PaddedBatch::from_sequences(&[&short, &long], PAD);
    let before = m.loss(&batch, &[&e1, &e2]).unwrap();
    let mut noisy = batch.clone();
    for t in &mut noisy.tokens[0][4..] {
        *t = rng.random_range(0..35);
    }
    assert_ne!(noisy.tokens[0], batch.tokens[0]);
    assert_eq!(m.loss(&noisy, &[&e1, &e2]).unwrap(), before);
}

fn layout_scalars(c: &ModelConfig) -> usize {
    layout(c).iter().map(|(_, (r, k))| r * k).sum()
}

#[test]
fn parameter_counts_match_the_published_formula() {
    let desk = ModelConfig::desk();
    assert_eq!(desk.param_count(), 1_101_095);
    assert_eq!(layout_scalars(&desk), 1_101_095);
    let p: Params<f32> = Params::zeros(&desk);
    assert_eq!(p.n_scalars(), 1_101_095);
    let paper = ModelConfig::paper();
    assert_eq!(paper.param_count(), 202_164_263);
    assert_eq!(layout_scalars(&paper), 202_164_263);
}

/// Relative disagreement; two values that are both at the level of
/// floating-point noise count as equal.
fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let c = ModelConfig::micro();
    assert_eq!((c.d_model, c.n_layers, c.n_heads, c.memory_slots), (16, 1, 1, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut m: Model<f64> = Model::new(c.clone(), &mut rng).unwrap();
    // Larger weights than the default init make every term matter.
    for t in &mut m.params.tensors {
        t.mapv_inplace(|v| v * 10.0 + rng.random_range(-0.05..0.05));
    }
    let seqs: Vec<Vec<u32>> = [9usize, 14, 31]
        .iter()
        .map(|&l| {
            let mut s = random_tokens(&mut rng, l);
            s.push(EOS);
            s
        })
        .collect();
    let refs: Vec<&[u32]> = seqs.iter().map(|s| s.as_slice()).collect();
    let batch = PaddedBatch::from_sequences(&refs, PAD);
    let mems: Vec<Vec<f64>> = (0..3).map(|_| (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mem_refs: Vec<&[f64]> = mems.iter().map(|v| v.as_slice()).collect();

    let (_, grad) = m.loss_and_grad(&batch, &mem_refs, None, true).unwrap();
    let grad = grad.unwrap();
    let total = m.params.n_scalars();
    let n_check = total.div_ceil(100);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked_nonzero = 0;
    for _ in 0..n_check {
        let ti = rng.random_range(0..m.params.tensors.len());
        let (r, k) = m.params.tensors[ti].dim();
        let idx = [rng.random_range(0..r), rng.random_range(0..k)];
        let orig = m.params.tensors[ti][idx];
        m.params.tensors[ti][idx] = orig + h;
        let up = m.loss(&batch, &mem_refs).unwrap();
        m.params.tensors[ti][idx] = orig - h;
        let down = m.loss(&batch, &mem_refs).unwrap();
        m.params.tensors[ti][idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad.tensors[ti][idx];
        if analytic.abs() > 1e-9 {
            checked_nonzero += 1;
        }
        let e = rel_err(analytic, numeric);
        assert!(e <= 1e-3, "{}{:?}: analytic {analytic} numeric {numeric}", m.params.names[ti], idx);
        worst = worst.max(e);
    }
    assert!(checked_nonzero * 2 > n_check, "too few informative coordinates sampled");
    eprintln!("checked {n_check} of {total} parameters, worst relative error {worst:.2e}");
}
