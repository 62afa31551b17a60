//! Training and test sets of `(formula, embedding)` pairs.
//!
//! A dataset on disk is a directory holding `records.jsonl` (one
//! [`ExampleRecord`] per line), `embeddings.emb` (rows in record order) and
//! `manifest.json`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::content_hash;
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::kernel::{load_embeddings, save_embeddings, AnchorSet, Embedding};
use crate::metrics::metrics_from_vectors;
use crate::robustness::{robustness_vector, satisfaction_vector};
use crate::sampler::{sample_fitting, SamplerConfig, MAX_UNFILTERED_DEPTH};
use crate::store::EmbeddingStore;
use crate::syntax::{parse, print};
use crate::trajectory::TrajectoryBatch;
use crate::vocab::{structure_stats, Vocabulary};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.emb";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Smallest depth produced by every recipe.
pub const MIN_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecipeName {
    EasySkewed,
    HardSkewed,
    Balanced,
    Random,
}

impl fmt::Display for RecipeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecipeName::EasySkewed => "easyskewed",
            RecipeName::HardSkewed => "hardskewed",
            RecipeName::Balanced => "balanced",
            RecipeName::Random => "random",
        })
    }
}

impl FromStr for RecipeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easyskewed" => Ok(RecipeName::EasySkewed),
            "hardskewed" => Ok(RecipeName::HardSkewed),
            "balanced" => Ok(RecipeName::Balanced),
            "random" => Ok(RecipeName::Random),
            _ => Err(Error::InvalidConfig(format!(
                "unknown recipe {s:?} (expected easyskewed, hardskewed, balanced or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecipe {
    pub name: RecipeName,
    pub total: usize,
    /// Empty for `random`.
    pub per_depth_counts: BTreeMap<usize, usize>,
    pub p_leaf: f64,
}

/// Splits `total` evenly over `depths`, giving the remainder to the lowest
/// depths.
pub fn split_evenly(total: usize, lo: usize, hi: usize) -> BTreeMap<usize, usize> {
    let n = hi - lo + 1;
    (lo..=hi)
        .map(|d| (d, total / n + usize::from(d - lo < total % n)))
        .collect()
}

impl DatasetRecipe {
    /// Standard recipe scaled to `total`: the skewed recipes put two thirds
    /// (rounded) of the records on depths 2..=4 and the rest on 5..=7.
    pub fn new(name: RecipeName, total: usize) -> Self {
        let per_depth_counts = match name {
            RecipeName::Random => BTreeMap::new(),
            RecipeName::Balanced => split_evenly(total, 2, 7),
            RecipeName::EasySkewed | RecipeName::HardSkewed => {
                let major = (2 * total + 1) / 3;
                let (easy, hard) = if name == RecipeName::EasySkewed {
                    (major, total - major)
                } else {
                    (total - major, major)
                };
                let mut m = split_evenly(easy, 2, 4);
                m.extend(split_evenly(hard, 5, 7));
                m
            }
        };
        DatasetRecipe {
            name,
            total,
            per_depth_counts,
            p_leaf: 0.45,
        }
    }

    /// Balanced recipe over a custom inclusive depth range.
    pub fn balanced_depths(lo: usize, hi: usize, total: usize) -> Self {
        DatasetRecipe {
            name: RecipeName::Balanced,
            total,
            per_depth_counts: split_evenly(total, lo, hi),
            p_leaf: 0.45,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::InvalidConfig("recipe total must be at least 1".into()));
        }
        if self.name == RecipeName::Random {
            if !self.per_depth_counts.is_empty() {
                return Err(Error::InvalidConfig("random recipe takes no per-depth counts".into()));
            }
        } else {
            let sum: usize = self.per_depth_counts.values().sum();
            if sum != self.total {
                return Err(Error::InvalidConfig(format!(
                    "per-depth counts sum to {sum}, not {}",
                    self.total
                )));
            }
            if self.per_depth_counts.keys().any(|&d| d == 0) {
                return Err(Error::InvalidConfig("depth 0 does not exist".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.p_leaf) {
            return Err(Error::InvalidConfig("p_leaf must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: usize,
    pub formula_text: String,
    pub depth: usize,
    pub n_nodes: usize,
    pub n_tokens: usize,
    pub embedding_index: usize,
    /// Distance between this formula and its store nearest neighbour
    /// (`worst` sets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<DatasetRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_config: Option<TestSetConfig>,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub anchor_set_id: String,
    pub vocabulary_hash: String,
    pub n_records: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
    pub records_hash: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ExampleRecord>,
    pub embeddings: Vec<Embedding>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    fn assemble(
        kind: &str,
        formulae: Vec<Formula>,
        embeddings: Vec<Embedding>,
        scores: Option<Vec<f64>>,
        a: &AnchorSet,
        sampler: &SamplerConfig,
        seed: u64,
    ) -> Result<Self> {
        let vocab = Vocabulary::stl();
        let records: Vec<ExampleRecord> = formulae
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let s = structure_stats(f, &vocab);
                ExampleRecord {
                    id: i,
                    formula_text: print(f),
                    depth: s.depth,
                    n_nodes: s.n_nodes,
                    n_tokens: s.n_tokens,
                    embedding_index: i,
                    baseline_d: scores.as_ref().map(|v| v[i]),
                }
            })
            .collect();
        let mut depth_histogram = BTreeMap::new();
        for r in &records {
            *depth_histogram.entry(r.depth).or_insert(0) += 1;
        }
        let manifest = DatasetManifest {
            kind: kind.to_string(),
            recipe: None,
            test_config: None,
            sampler: sampler.clone(),
            seed,
            anchor_set_id: a.id().to_string(),
            vocabulary_hash: vocab.hash(),
            n_records: records.len(),
            depth_histogram,
            records_hash: content_hash(&records_bytes(&records)?),
        };
        Ok(Dataset {
            records,
            embeddings,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn texts(&self) -> HashSet<String> {
        self.records.iter().map(|r| r.formula_text.clone()).collect()
    }

    pub fn formulae(&self) -> Result<Vec<Formula>> {
        self.records
            .iter()
            .map(|r| parse(&r.formula_text).map_err(Error::from))
            .collect()
    }

    pub fn embedding(&self, r: &ExampleRecord) -> &Embedding {
        &self.embeddings[r.embedding_index]
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RECORDS_FILE), records_bytes(&self.records)?)?;
        let dim = self.embeddings.first().map_or(0, Embedding::dim);
        save_embeddings(dir.join(EMBEDDINGS_FILE), &self.manifest.anchor_set_id, dim, &self.embeddings)?;
        let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut w, &self.manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: DatasetManifest =
            serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
        let mut records = Vec::new();
        for line in BufReader::new(File::open(dir.join(RECORDS_FILE))?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str::<ExampleRecord>(&line)?);
            }
        }
        let embeddings = load_embeddings(dir.join(EMBEDDINGS_FILE))?;
        if records.len() != manifest.n_records {
            return Err(Error::Format(format!(
                "{} records but the manifest lists {}",
                records.len(),
                manifest.n_records
            )));
        }
        if let Some(r) = records.iter().find(|r| r.embedding_index >= embeddings.len()) {
            return Err(Error::Format(format!("record {} points past the embedding file", r.id)));
        }
        if let Some(e) = embeddings.iter().find(|e| e.anchor_set_id != manifest.anchor_set_id) {
            return Err(Error::AnchorSetMismatch {
                expected: manifest.anchor_set_id.clone(),
                found: e.anchor_set_id.clone(),
            });
        }
        Ok(Dataset {
            records,
            embeddings,
            manifest,
        })
    }
}

fn records_bytes(records: &[ExampleRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Draws `count` distinct canonical formulae from `cfg`, skipping any in
/// `taken` (which is extended), then embeds them. Draws that fail to embed
/// (numerically zero self-kernel) are replaced.
fn draw_embedded(
    cfg: &SamplerConfig,
    count: usize,
    a: &AnchorSet,
    taken: &mut HashSet<String>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Formula>, Vec<Embedding>)> {
    let t_steps = a.batch().t_steps();
    let draw = |rng: &mut ChaCha8Rng, taken: &mut HashSet<String>| -> Result<Formula> {
        for _ in 0..cfg.max_attempts.max(1) {
            let f = sample_fitting(cfg, t_steps, rng)?.rounded();
            if taken.insert(print(&f)) {
                return Ok(f);
            }
        }
        Err(Error::FilterExhausted {
            attempts: cfg.max_attempts,
        })
    };
    let mut formulae = Vec::with_capacity(count);
    for _ in 0..count {
        formulae.push(draw(rng, taken)?);
    }
    let mut slots: Vec<Option<Embedding>> = formulae.par_iter().map(|f| a.embed(f).ok()).collect();
    for _ in 0..cfg.max_attempts.max(1) {
        let Some(i) = slots.iter().position(Option::is_none) else {
            break;
        };
        formulae[i] = draw(rng, taken)?;
        slots[i] = a.embed(&formulae[i]).ok();
    }
    let embeddings = slots
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(Error::FilterExhausted {
            attempts: cfg.max_attempts,
        })?;
    Ok((formulae, embeddings))
}

fn base_sampler(base: &SamplerConfig, a: &AnchorSet, p_leaf: f64, seed: u64) -> Result<SamplerConfig> {
    if base.n_vars > a.batch().n_vars() {
        return Err(Error::InvalidConfig(format!(
            "sampler uses {} variables but the kernel batch has {}",
            base.n_vars,
            a.batch().n_vars()
        )));
    }
    let cfg = SamplerConfig {
        p_leaf,
        seed,
        ..base.clone()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Builds a training set under `a`. Per-depth recipes sample from the
/// formula distribution conditioned on each depth; `random` keeps every
/// draw of depth at least [`MIN_DEPTH`].
pub fn build_training_set(recipe: &DatasetRecipe, a: &AnchorSet, sampler: &SamplerConfig, seed: u64) -> Result<Dataset> {
    recipe.validate()?;
    let cfg = base_sampler(sampler, a, recipe.p_leaf, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let mut formulae = Vec::with_capacity(recipe.total);
    let mut embeddings = Vec::with_capacity(recipe.total);
    if recipe.name == RecipeName::Random {
        let (f, e) = draw_embedded(
            &cfg.with_depths(MIN_DEPTH, MAX_UNFILTERED_DEPTH),
            recipe.total,
            a,
            &mut taken,
            &mut rng,
        )?;
        formulae = f;
        embeddings = e;
    } else {
        for (&depth, &count) in &recipe.per_depth_counts {
            let (f, e) = draw_embedded(&cfg.with_depths(depth, depth), count, a, &mut taken, &mut rng)?;
            formulae.extend(f);
            embeddings.extend(e);
        }
    }
    let mut ds = Dataset::assemble("train", formulae, embeddings, None, a, &cfg, seed)?;
    ds.manifest.recipe = Some(recipe.clone());
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetConfig {
    pub balanced_total: usize,
    pub balanced_depths: (usize, usize),
    pub ood_total: usize,
    pub ood_depth: usize,
    pub worst_k: usize,
    /// Candidates drawn before keeping the `worst_k` highest baseline
    /// distances.
    pub worst_pool: usize,
    pub worst_p_leaf: f64,
    pub p_leaf: f64,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        TestSetConfig {
            balanced_total: 200,
            balanced_depths: (2, 7),
            ood_total: 200,
            ood_depth: 8,
            worst_k: 200,
            worst_pool: 2000,
            worst_p_leaf: 0.4,
            p_leaf: 0.45,
        }
    }
}

impl TestSetConfig {
    /// Full-size sets: 3000 balanced, 500 out-of-distribution, 400 worst.
    pub fn paper_scale() -> Self {
        TestSetConfig {
            balanced_total: 3000,
            ood_total: 500,
            worst_k: 400,
            worst_pool: 4000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.balanced_depths;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig("balanced depths must satisfy 1 <= lo <= hi".into()));
        }
        if self.worst_pool < self.worst_k {
            return Err(Error::InvalidConfig("worst_pool must be at least worst_k".into()));
        }
        if self.ood_depth == 0 {
            return Err(Error::InvalidConfig("ood depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TestSets {
    pub balanced: Dataset,
    pub ood: Dataset,
    pub worst: Dataset,
}

/// Held-out sets whose canonical strings avoid `exclude` and each other.
///
/// `worst` draws `worst_pool` candidates, retrieves each one's nearest
/// store formula and keeps the `worst_k` with the largest robustness
/// distance on `xi` (ties keep draw order).
pub fn build_test_sets(
    cfg: &TestSetConfig,
    a: &AnchorSet,
    sampler: &SamplerConfig,
    store: &EmbeddingStore,
    xi: &TrajectoryBatch,
    exclude: &HashSet<String>,
    seed: u64,
) -> Result<TestSets> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = exclude.clone();

    let bal_cfg = base_sampler(sampler, a, cfg.p_leaf, seed)?;
    let (lo, hi) = cfg.balanced_depths;
    let (mut bf, mut be) = (Vec::new(), Vec::new());
    for (depth, count) in split_evenly(cfg.balanced_total, lo, hi) {
        let (f, e) = draw_embedded(&bal_cfg.with_depths(depth, depth), count, a, &mut taken, &mut rng)?;
        bf.extend(f);
        be.extend(e);
    }
    let mut balanced = Dataset::assemble("balanced", bf, be, None, a, &bal_cfg, seed)?;

    let (of, oe) = draw_embedded(
        &bal_cfg.with_depths(cfg.ood_depth, cfg.ood_depth),
        cfg.ood_total,
        a,
        &mut taken,
        &mut rng,
    )?;
    let mut ood = Dataset::assemble("ood", of, oe, None, a, &bal_cfg, seed)?;

    let worst_cfg = base_sampler(sampler, a, cfg.worst_p_leaf, seed)?;
    let (wf, we) = draw_embedded(
        &worst_cfg.with_depths(MIN_DEPTH, MAX_UNFILTERED_DEPTH),
        cfg.worst_pool,
        a,
        &mut taken,
        &mut rng,
    )?;
    let scores = wf
        .par_iter()
        .zip(&we)
        .map(|(f, e)| baseline_distance(f, e, store, xi))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..wf.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(cfg.worst_k);
    let mut worst = Dataset::assemble(
        "worst",
        order.iter().map(|&i| wf[i].clone()).collect(),
        order.iter().map(|&i| we[i].clone()).collect(),
        Some(order.iter().map(|&i| scores[i]).collect()),
        a,
        &worst_cfg,
        seed,
    )?;

    for ds in [&mut balanced, &mut ood, &mut worst] {
        ds.manifest.test_config = Some(cfg.clone());
    }
    Ok(TestSets { balanced, ood, worst })
}

/// Robustness distance on `xi` between `f` and the store's nearest
/// neighbour of its embedding.
pub fn baseline_distance(f: &Formula, e: &Embedding, store: &EmbeddingStore, xi: &TrajectoryBatch) -> Result<f64> {
    let nn = store.nn_query(e, 1)?;
    let g = &store.rows()[nn[0].index].formula;
    let (ra, rb) = (robustness_vector(f, xi)?, robustness_vector(g, xi)?);
    let (sa, sb) = (satisfaction_vector(f, xi)?, satisfaction_vector(g, xi)?);
    Ok(metrics_from_vectors(&ra.values, &rb.values, &sa, &sb)?.d)
}

/// Draws `n` formulae of depth at least [`MIN_DEPTH`] that fit `t_steps`.
pub fn sample_many<R: Rng + ?Sized>(cfg: &SamplerConfig, n: usize, t_steps: usize, rng: &mut R) -> Result<Vec<Formula>> {
    let cfg = cfg.with_depths(MIN_DEPTH, MAX_UNFILTERED_DEPTH);
    (0..n).map(|_| sample_fitting(&cfg, t_steps, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_counts_scale() {
        let e = DatasetRecipe::new(RecipeName::EasySkewed, 78_000);
        let easy: usize = (2..=4).map(|d| e.per_depth_counts[&d]).sum();
        let hard: usize = (5..=7).map(|d| e.per_depth_counts[&d]).sum();
        assert_eq!((easy, hard), (52_000, 26_000));
        let h = DatasetRecipe::new(RecipeName::HardSkewed, 78_000);
        assert_eq!(h.per_depth_counts[&5], 52_000 / 3 + 1);
        let b = DatasetRecipe::new(RecipeName::Balanced, 78_000);
        assert!(b.per_depth_counts.values().all(|&c| c == 13_000));
        let b = DatasetRecipe::new(RecipeName::Balanced, 600);
        assert!(b.per_depth_counts.values().all(|&c| c == 100));
        for name in [RecipeName::EasySkewed, RecipeName::HardSkewed, RecipeName::Balanced] {
            for total in [1, 7, 10_000, 12_345] {
                DatasetRecipe::new(name, total).validate().unwrap();
            }
        }
        assert!(DatasetRecipe::new(RecipeName::Random, 10).per_depth_counts.is_empty());
    }

    #[test]
    fn remainder_goes_to_lowest_depths() {
        let m = split_evenly(200, 2, 7);
        assert_eq!(m.values().copied().collect::<Vec<_>>(), vec![34, 34, 33, 33, 33, 33]);
        let m = split_evenly(52_000, 2, 4);
        assert_eq!(m.values().copied().collect::<Vec<_>>(), vec![17_334, 17_333, 17_333]);
    }

    #[test]
    fn recipe_names_parse() {
        for n in ["easyskewed", "hardskewed", "balanced", "random"] {
            assert_eq!(n.parse::<RecipeName>().unwrap().to_string(), n);
        }
        assert!("skewed".parse::<RecipeName>().is_err());
    }

    #[test]
    fn invalid_recipe_rejected() {
        let mut r = DatasetRecipe::new(RecipeName::Balanced, 60);
        r.total = 61;
        assert!(r.validate().is_err());
    }
}
