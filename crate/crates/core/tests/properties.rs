use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stl_core::kernel::{gram_matrix, kernel};
use stl_core::sampler::sample_fitting;
use stl_core::trajectory::sample_seeded;
use stl_core::{
    parse, print, sample_formula, BaseMeasureConfig, Comparison, Formula, Interval, KernelConfig, SamplerConfig,
    Vocabulary,
};

fn interval() -> impl Strategy<Value = Interval> {
    (0usize..30, prop::option::of(0usize..30)).prop_map(|(a, d)| match d {
        Some(d) => Interval::bounded(a, a + d),
        None => Interval::unbounded(a),
    })
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        6 => (0usize..12, any::<bool>(), -1e4f64..1e4).prop_map(|(v, ge, th)| {
            Formula::atom(v, if ge { Comparison::Ge } else { Comparison::Le }, th)
        }),
    ];
    leaf.prop_recursive(6, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (interval(), inner.clone()).prop_map(|(i, f)| Formula::globally(i, f)),
            (interval(), inner.clone(), inner).prop_map(|(i, a, b)| Formula::until(i, a, b)),
        ]
    })
}

proptest! {
    #[test]
    fn parse_inverts_print(f in formula()) {
        let text = print(&f);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &f.rounded());
        prop_assert_eq!(print(&back), text);
    }

    #[test]
    fn tokenizer_round_trips_printed_text(f in formula()) {
        let v = Vocabulary::stl();
        let text = print(&f);
        let seq = v.tokenize(&text);
        prop_assert!(!seq.ids.contains(&v.unk));
        prop_assert_eq!(v.detokenize(&seq), text);
        let enc = v.encode_formula(&f);
        prop_assert!(enc.is_well_formed(&v));
        prop_assert_eq!(enc.len(), seq.len() + 2);
    }

    #[test]
    fn rounding_is_idempotent(f in formula()) {
        let r = f.rounded();
        prop_assert_eq!(r.rounded(), r);
    }

    #[test]
    fn structure_is_consistent(f in formula()) {
        prop_assert!(f.n_nodes() >= f.depth());
        prop_assert_eq!(f.min_horizon(), f.lead() + 1);
        prop_assert_eq!(Formula::not(f.clone()).depth(), f.depth() + 1);
    }

    #[test]
    fn parser_never_panics(s in "[ -~]{0,60}") {
        let _ = parse(&s);
    }
}

#[test]
fn sampled_formulae_round_trip() {
    let v = Vocabulary::stl();
    let cfg = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let f = sample_formula(&cfg, &mut rng).unwrap().rounded();
        let text = print(&f);
        assert_eq!(parse(&text).unwrap(), f);
        assert_eq!(v.detokenize(&v.tokenize(&text)), text);
    }
}

#[test]
fn leaf_rate_matches_configuration() {
    // subcritical settings only; supercritical growth is truncated by forced leaves
    for p in [0.4, 0.45, 0.7] {
        let cfg = SamplerConfig {
            p_leaf: p,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut leaves, mut nodes) = (0usize, 0usize);
        for _ in 0..3000 {
            let f = sample_formula(&cfg, &mut rng).unwrap();
            leaves += f.atoms().len();
            nodes += f.n_nodes();
        }
        // every node is a leaf with probability p, independently of its parent
        let rate = leaves as f64 / nodes as f64;
        let se = (p * (1.0 - p) / nodes as f64).sqrt();
        assert!((rate - p).abs() < 6.0 * se + 0.01, "p {p}: observed {rate}");
    }
}

fn kernel_world(normalized: bool) -> (KernelConfig, SamplerConfig) {
    let batch = sample_seeded(
        &BaseMeasureConfig {
            seed: 31,
            ..Default::default()
        },
        500,
    )
    .unwrap();
    (KernelConfig::new(Arc::new(batch), normalized), SamplerConfig::default())
}

#[test]
fn kernel_negation_is_exact_in_raw_mode() {
    let (cfg, s) = kernel_world(false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let f = sample_fitting(&s, 100, &mut rng).unwrap();
        let kff = kernel(&f, &f, &cfg).unwrap();
        assert_eq!(kernel(&f, &Formula::not(f.clone()), &cfg).unwrap(), -kff);
    }
}

#[test]
fn gram_matrix_is_positive_semidefinite() {
    for normalized in [false, true] {
        let (cfg, s) = kernel_world(normalized);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fs: Vec<Formula> = (0..50).map(|_| sample_fitting(&s, 100, &mut rng).unwrap()).collect();
        let g = gram_matrix(&fs, &cfg).unwrap();
        let m = DMatrix::from_fn(50, 50, |i, j| g[i][j]);
        assert_eq!(m, m.transpose());
        let eig = m.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        assert!(min >= -1e-6 * max, "min eigenvalue {min}, max {max}");
    }
}

#[test]
fn cauchy_schwarz() {
    let (cfg, s) = kernel_world(false);
    let (ncfg, _) = kernel_world(true);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let f = sample_fitting(&s, 100, &mut rng).unwrap();
        let g = sample_fitting(&s, 100, &mut rng).unwrap();
        let kfg = kernel(&f, &g, &cfg).unwrap();
        let kff = kernel(&f, &f, &cfg).unwrap();
        let kgg = kernel(&g, &g, &cfg).unwrap();
        assert!(kfg * kfg <= kff * kgg * (1.0 + 1e-9) + 1e-9);
        assert!(kernel(&f, &g, &ncfg).unwrap().abs() <= 1.0 + 1e-9);
    }
}
