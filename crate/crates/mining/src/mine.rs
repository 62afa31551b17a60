//! GP-UCB search over the embedding space with decoder read-out.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stl_core::dataset::sample_many;
use stl_core::{parse, AnchorSet, Formula, SamplerConfig};
use stl_decoder::{decode_texts, Checkpoint, DecodeConfig};

use crate::error::{MiningError, Result};
use crate::gp::{gp_fit, gp_fit_hyperparams, median_pairwise_distance, GPConfig, GPPosterior};
use crate::objective::{classification_report, objective_g, ClassificationReport};
use crate::problems::MiningProblem;
use crate::ucb::{ucb_maximize, UCBConfig};

/// Objective recorded for a candidate whose decode is unusable.
pub const INVALID_PENALTY: f64 = -1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub n_init: usize,
    pub iterations: usize,
    /// Lengthscale, signal variance and prior mean are re-derived from the
    /// initial design; the remaining fields are used as given.
    pub gp: GPConfig,
    pub ucb: UCBConfig,
    /// Iterations between hyperparameter refits when `gp.fit_hyperparams`.
    pub refit_every: usize,
    pub sampler: SamplerConfig,
    pub decode: DecodeConfig,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            n_init: 100,
            iterations: 50,
            gp: GPConfig::default(),
            ucb: UCBConfig::default(),
            refit_every: 10,
            sampler: SamplerConfig::default(),
            decode: DecodeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 0 for the initial design.
    pub iteration: usize,
    pub candidate_hash: String,
    pub decoded: String,
    pub valid: bool,
    #[serde(rename = "G")]
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub best_formula: String,
    #[serde(rename = "best_G")]
    pub best_g: f64,
    pub best_nodes: usize,
    /// Iteration at which the best formula was found.
    pub best_iteration: usize,
    pub mcr: f64,
    pub precision: f64,
    pub recall: f64,
    pub test_report: ClassificationReport,
    pub train_report: ClassificationReport,
    pub n_decoded: usize,
    pub n_invalid: usize,
    pub trace: Vec<TraceRecord>,
}

impl MiningResult {
    pub fn formula(&self) -> Formula {
        parse(&self.best_formula).expect("best formula is stored in canonical form")
    }
}

pub fn embedding_hash(x: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

struct Scored {
    formula: Formula,
    g: f64,
    embedding: Option<Vec<f64>>,
}

/// Parses, checks evaluability, scores G on the training split and re-embeds.
fn score_text(text: &str, p: &MiningProblem, a: &AnchorSet) -> Option<Scored> {
    let f = parse(text).ok()?;
    if !f.fits(p.t_steps(), p.n_vars()) {
        return None;
    }
    let g = objective_g(&f, &p.train_pos, &p.train_neg).ok()?;
    if !g.is_finite() {
        return None;
    }
    let embedding = if a.accepts(&f) { a.embed(&f).ok().map(|e| e.values) } else { None };
    Some(Scored { formula: f, g, embedding })
}

struct Best {
    formula: Formula,
    g: f64,
    iteration: usize,
}

pub fn mine(
    problem: &MiningProblem,
    ckpt: &Checkpoint,
    anchors: &AnchorSet,
    cfg: &MiningConfig,
    mut trace_out: Option<&mut dyn Write>,
) -> Result<MiningResult> {
    ckpt.check_compatible(anchors.id())?;
    if ckpt.config().embedding_dim() != anchors.dim() {
        return Err(MiningError::ShapeMismatch(format!(
            "checkpoint expects {}-dimensional embeddings, anchor set has {}",
            ckpt.config().embedding_dim(),
            anchors.dim()
        )));
    }
    let grid = anchors.batch();
    if (grid.t_steps(), grid.n_vars()) != (problem.t_steps(), problem.n_vars()) {
        return Err(MiningError::ShapeMismatch(format!(
            "problem trajectories are {}x{}, anchor grid is {}x{}",
            problem.t_steps(),
            problem.n_vars(),
            grid.t_steps(),
            grid.n_vars()
        )));
    }
    if cfg.n_init == 0 {
        return Err(MiningError::InvalidConfig("n_init must be >= 1".into()));
    }
    cfg.ucb.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut emit = |r: TraceRecord, trace: &mut Vec<TraceRecord>| -> Result<()> {
        if let Some(w) = trace_out.as_deref_mut() {
            writeln!(w, "{}", serde_json::to_string(&r)?)?;
        }
        trace.push(r);
        Ok(())
    };

    // Initial design: formulae drawn from the sampler with their true scores.
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut best: Option<Best> = None;
    let consider = |f: &Formula, g: f64, it: usize, best: &mut Option<Best>| {
        if best.as_ref().is_none_or(|b| g > b.g) {
            *best = Some(Best {
                formula: f.clone(),
                g,
                iteration: it,
            });
        }
    };
    while xs.len() < cfg.n_init {
        let need = cfg.n_init - xs.len();
        let fs: Vec<Formula> = sample_many(&cfg.sampler, need, problem.t_steps(), &mut rng)?
            .iter()
            .map(Formula::rounded)
            .collect();
        let scored: Vec<Option<Scored>> = fs.par_iter().map(|f| score_text(&f.to_string(), problem, anchors)).collect();
        for s in scored.into_iter().flatten() {
            let Some(e) = s.embedding else { continue };
            consider(&s.formula, s.g, 0, &mut best);
            emit(
                TraceRecord {
                    iteration: 0,
                    candidate_hash: embedding_hash(&e),
                    decoded: s.formula.to_string(),
                    valid: true,
                    g: s.g,
                },
                &mut trace,
            )?;
            xs.push(e);
            ys.push(s.g);
        }
    }

    let n0 = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n0;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n0;
    let mut gp_cfg = GPConfig {
        lengthscale: median_pairwise_distance(&xs).max(1e-6),
        signal_variance: var.max(1e-6),
        prior_mean: mean,
        ..cfg.gp.clone()
    };
    let fit = |xs: &[Vec<f64>], ys: &[f64], c: &GPConfig, refit: bool| -> Result<GPPosterior> {
        if refit {
            gp_fit_hyperparams(xs.to_vec(), ys.to_vec(), c)
        } else {
            gp_fit(xs.to_vec(), ys.to_vec(), c)
        }
    };
    let mut post = fit(&xs, &ys, &gp_cfg, cfg.gp.fit_hyperparams)?;
    gp_cfg = post.cfg.clone();

    let (mut n_decoded, mut n_invalid) = (0, 0);
    for it in 1..=cfg.iterations {
        let cands = ucb_maximize(&post, &cfg.ucb, &mut rng)?;
        let es: Vec<Vec<f32>> = cands.iter().map(|c| c.x.iter().map(|&v| v as f32).collect()).collect();
        let texts = decode_texts(&ckpt.model, &es, &cfg.decode)?;
        let scored: Vec<Option<Scored>> = texts.par_iter().map(|t| score_text(t, problem, anchors)).collect();
        for ((c, text), s) in cands.iter().zip(texts).zip(scored) {
            n_decoded += 1;
            let g = match &s {
                Some(s) => s.g,
                None => {
                    n_invalid += 1;
                    INVALID_PENALTY
                }
            };
            emit(
                TraceRecord {
                    iteration: it,
                    candidate_hash: embedding_hash(&c.x),
                    decoded: text,
                    valid: s.is_some(),
                    g,
                },
                &mut trace,
            )?;
            xs.push(c.x.clone());
            ys.push(g);
            if let Some(s) = s {
                consider(&s.formula, s.g, it, &mut best);
                if let Some(e) = s.embedding {
                    if !xs.contains(&e) {
                        xs.push(e);
                        ys.push(s.g);
                    }
                }
            }
        }
        let refit = cfg.gp.fit_hyperparams && cfg.refit_every > 0 && it % cfg.refit_every == 0;
        post = fit(&xs, &ys, &gp_cfg, refit)?;
        gp_cfg = post.cfg.clone();
    }

    let best = best.ok_or(MiningError::NoValidFormula)?;
    let test = classification_report(&best.formula, &problem.test_pos, &problem.test_neg)?;
    let train = classification_report(&best.formula, &problem.train_pos, &problem.train_neg)?;
    Ok(MiningResult {
        best_formula: best.formula.to_string(),
        best_g: best.g,
        best_nodes: best.formula.n_nodes(),
        best_iteration: best.iteration,
        mcr: test.mcr,
        precision: test.precision,
        recall: test.recall,
        test_report: test,
        train_report: train,
        n_decoded,
        n_invalid,
        trace,
    })
}
