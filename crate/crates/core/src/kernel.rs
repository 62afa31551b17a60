//! Monte Carlo STL kernel and anchor-set embeddings.
//!
//! The kernel of two formulae is the mean, over a fixed sample of base
//! measure trajectories, of the product of their robustness values at
//! `t = 0`. An embedding is the vector of kernel values against an ordered
//! set of anchor formulae.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Hasher};
use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::robustness::robustness_vector;
use crate::sampler::{sample_fitting, SamplerConfig};
use crate::syntax::{parse, print};
use crate::trajectory::{BaseMeasureConfig, TrajectoryBatch};

/// Self-kernels at or below this value are treated as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Optional transform applied to robustness values before the inner product.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Squash {
    #[default]
    None,
    Arctan,
}

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub batch: Arc<TrajectoryBatch>,
    pub normalized: bool,
    pub squash: Squash,
}

impl KernelConfig {
    pub fn new(batch: Arc<TrajectoryBatch>, normalized: bool) -> Self {
        KernelConfig {
            batch,
            normalized,
            squash: Squash::None,
        }
    }

    /// Robustness vector of `f` on the kernel batch after squashing.
    pub fn features(&self, f: &Formula) -> Result<Vec<f64>> {
        let mut v = robustness_vector(f, &self.batch)?.values;
        if self.squash == Squash::Arctan {
            v.iter_mut().for_each(|x| *x = x.atan());
        }
        Ok(v)
    }

    fn raw(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / self.batch.len() as f64
    }
}

/// Left-to-right accumulation; every kernel value in this module goes
/// through here so that pairwise, Gram and embedding values agree bit for
/// bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

#[inline]
fn normalize(raw: f64, kff: f64, kgg: f64) -> Result<f64> {
    for k in [kff, kgg] {
        if k <= DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateFormula { self_kernel: k });
        }
    }
    Ok(raw / (kff * kgg).sqrt())
}

pub fn kernel(f: &Formula, g: &Formula, cfg: &KernelConfig) -> Result<f64> {
    let a = cfg.features(f)?;
    let b = cfg.features(g)?;
    let raw = cfg.raw(&a, &b);
    if cfg.normalized {
        normalize(raw, cfg.raw(&a, &a), cfg.raw(&b, &b))
    } else {
        Ok(raw)
    }
}

/// Symmetric matrix of pairwise kernel values, `R Rᵀ / N` for the robustness
/// matrix `R` (normalized afterwards when configured).
pub fn gram_matrix(fs: &[Formula], cfg: &KernelConfig) -> Result<Vec<Vec<f64>>> {
    let feats = fs
        .par_iter()
        .map(|f| cfg.features(f))
        .collect::<Result<Vec<_>>>()?;
    let n = fs.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = cfg.raw(&feats[i], &feats[j]);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    if cfg.normalized {
        let diag: Vec<f64> = (0..n).map(|i| g[i][i]).collect();
        for i in 0..n {
            for j in 0..n {
                g[i][j] = normalize(g[i][j], diag[i], diag[j])?;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub anchor_set_id: String,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Provenance recorded alongside an anchor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMeta {
    pub sampler: SamplerConfig,
    pub base_measure: Option<BaseMeasureConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AnchorSet {
    anchors: Vec<Formula>,
    features: Vec<Vec<f64>>,
    self_kernels: Vec<f64>,
    kernel_cfg: KernelConfig,
    meta: AnchorMeta,
    id: String,
}

fn anchor_set_id(anchors: &[Formula], cfg: &KernelConfig) -> String {
    let mut h = Hasher::new();
    h.update(cfg.batch.id().as_bytes())
        .update(&[u8::from(cfg.normalized), cfg.squash as u8]);
    for a in anchors {
        h.update(print(a).as_bytes()).update(b"\n");
    }
    h.finish()
}

impl AnchorSet {
    /// Builds an anchor set from explicit formulae.
    pub fn from_formulae(anchors: Vec<Formula>, kcfg: KernelConfig, meta: AnchorMeta) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::InvalidConfig("anchor set needs D >= 1".into()));
        }
        let features = anchors
            .par_iter()
            .map(|f| kcfg.features(f))
            .collect::<Result<Vec<_>>>()?;
        let self_kernels: Vec<f64> = features.iter().map(|r| kcfg.raw(r, r)).collect();
        if let Some(&k) = self_kernels.iter().find(|&&k| k <= DEGENERACY_THRESHOLD) {
            return Err(Error::DegenerateFormula { self_kernel: k });
        }
        let id = anchor_set_id(&anchors, &kcfg);
        Ok(AnchorSet {
            anchors,
            features,
            self_kernels,
            kernel_cfg: kcfg,
            meta,
            id,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchors(&self) -> &[Formula] {
        &self.anchors
    }

    pub fn self_kernels(&self) -> &[f64] {
        &self.self_kernels
    }

    pub fn kernel_cfg(&self) -> &KernelConfig {
        &self.kernel_cfg
    }

    pub fn batch(&self) -> &TrajectoryBatch {
        &self.kernel_cfg.batch
    }

    pub fn meta(&self) -> &AnchorMeta {
        &self.meta
    }

    /// Whether `f` can be embedded (horizon and variables fit the batch).
    pub fn accepts(&self, f: &Formula) -> bool {
        f.fits(self.batch().t_steps(), self.batch().n_vars())
    }

    pub fn embed(&self, f: &Formula) -> Result<Embedding> {
        let r = self.kernel_cfg.features(f)?;
        self.embed_features(&r)
    }

    /// Embedding from an already computed (squashed) robustness vector on the
    /// kernel batch.
    pub fn embed_features(&self, r: &[f64]) -> Result<Embedding> {
        if r.len() != self.batch().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} robustness values for a batch of {}",
                r.len(),
                self.batch().len()
            )));
        }
        let cfg = &self.kernel_cfg;
        let kff = cfg.raw(r, r);
        let values = self
            .features
            .iter()
            .zip(&self.self_kernels)
            .map(|(anchor, &kaa)| {
                let raw = cfg.raw(r, anchor);
                if cfg.normalized {
                    normalize(raw, kff, kaa)
                } else {
                    Ok(raw)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Embedding {
            values,
            anchor_set_id: self.id.clone(),
        })
    }

    pub fn embed_many(&self, fs: &[Formula]) -> Result<Vec<Embedding>> {
        fs.par_iter().map(|f| self.embed(f)).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.batch().save(dir.join(ANCHOR_BATCH_FILE))?;
        let file = AnchorSetFile {
            version: 1,
            id: self.id.clone(),
            dim: self.dim(),
            normalized: self.kernel_cfg.normalized,
            squash: self.kernel_cfg.squash,
            batch_id: self.batch().id().to_string(),
            batch_file: ANCHOR_BATCH_FILE.to_string(),
            meta: self.meta.clone(),
            anchors: self.anchors.iter().map(print).collect(),
        };
        let mut w = BufWriter::new(File::create(dir.join(ANCHOR_SET_FILE))?);
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let file: AnchorSetFile =
            serde_json::from_reader(BufReader::new(File::open(dir.join(ANCHOR_SET_FILE))?))?;
        let batch = TrajectoryBatch::load(dir.join(&file.batch_file))?;
        if batch.id() != file.batch_id {
            return Err(Error::Format(format!(
                "kernel batch hash {} does not match recorded {}",
                batch.id(),
                file.batch_id
            )));
        }
        let anchors = file
            .anchors
            .iter()
            .map(|s| parse(s).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        let kcfg = KernelConfig {
            batch: Arc::new(batch),
            normalized: file.normalized,
            squash: file.squash,
        };
        let set = Self::from_formulae(anchors, kcfg, file.meta)?;
        if set.id != file.id {
            return Err(Error::AnchorSetMismatch {
                expected: file.id,
                found: set.id,
            });
        }
        Ok(set)
    }
}

pub const ANCHOR_SET_FILE: &str = "anchors.json";
pub const ANCHOR_BATCH_FILE: &str = "kernel_batch.traj";

#[derive(Debug, Serialize, Deserialize)]
struct AnchorSetFile {
    version: u32,
    id: String,
    dim: usize,
    normalized: bool,
    squash: Squash,
    batch_id: String,
    batch_file: String,
    meta: AnchorMeta,
    anchors: Vec<String>,
}

/// Samples `dim` anchors from the formula distribution, resampling any that
/// do not fit the kernel batch or have a numerically zero self-kernel.
/// Anchors are stored in canonical (4-significant-digit) form.
pub fn make_anchor_set<R: Rng + ?Sized>(
    dim: usize,
    scfg: &SamplerConfig,
    kcfg: KernelConfig,
    base_measure: Option<BaseMeasureConfig>,
    rng: &mut R,
) -> Result<AnchorSet> {
    if dim == 0 {
        return Err(Error::InvalidConfig("anchor set needs D >= 1".into()));
    }
    if scfg.n_vars > kcfg.batch.n_vars() {
        return Err(Error::InvalidConfig(format!(
            "sampler uses {} variables but the kernel batch has {}",
            scfg.n_vars,
            kcfg.batch.n_vars()
        )));
    }
    let t_steps = kcfg.batch.t_steps();
    let mut anchors = Vec::with_capacity(dim);
    while anchors.len() < dim {
        let mut accepted = None;
        for _ in 0..scfg.max_attempts.max(1) {
            let f = sample_fitting(scfg, t_steps, rng)?.rounded();
            let r = kcfg.features(&f)?;
            if kcfg.raw(&r, &r) > DEGENERACY_THRESHOLD {
                accepted = Some(f);
                break;
            }
        }
        anchors.push(accepted.ok_or(Error::FilterExhausted {
            attempts: scfg.max_attempts,
        })?);
    }
    let meta = AnchorMeta {
        sampler: scfg.clone(),
        base_measure,
        seed: scfg.seed,
    };
    AnchorSet::from_formulae(anchors, kcfg, meta)
}

const EMB_MAGIC: &[u8; 8] = b"STLEMB\0\0";
const EMB_VERSION: u32 = 1;

/// Writes embeddings as `magic, version, count, dim, anchor_set_id` followed
/// by row-major little-endian `f32` values.
pub fn write_embeddings(w: &mut impl Write, anchor_set_id: &str, dim: usize, rows: &[Embedding]) -> Result<()> {
    w.write_all(EMB_MAGIC)?;
    binio::write_u32(w, EMB_VERSION)?;
    binio::write_u64(w, rows.len() as u64)?;
    binio::write_u64(w, dim as u64)?;
    binio::write_str(w, anchor_set_id)?;
    for e in rows {
        if e.dim() != dim || e.anchor_set_id != anchor_set_id {
            return Err(Error::ShapeMismatch(format!(
                "embedding of dim {} under {} in a file of dim {dim} under {anchor_set_id}",
                e.dim(),
                e.anchor_set_id
            )));
        }
        binio::write_f32s(w, e.values.iter().map(|&v| v as f32))?;
    }
    Ok(())
}

pub fn read_embeddings(r: &mut impl Read) -> Result<Vec<Embedding>> {
    binio::expect_magic(r, EMB_MAGIC)?;
    let version = binio::read_u32(r)?;
    if version != EMB_VERSION {
        return Err(Error::Format(format!("unsupported embedding file version {version}")));
    }
    let count = binio::read_u64(r)? as usize;
    let dim = binio::read_u64(r)? as usize;
    let id = binio::read_str(r)?;
    (0..count)
        .map(|_| {
            Ok(Embedding {
                values: binio::read_f32s(r, dim)?.into_iter().map(f64::from).collect(),
                anchor_set_id: id.clone(),
            })
        })
        .collect()
}

pub fn save_embeddings(path: impl AsRef<Path>, anchor_set_id: &str, dim: usize, rows: &[Embedding]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(&mut w, anchor_set_id, dim, rows)?;
    w.flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<Embedding>> {
    read_embeddings(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Interval;
    use crate::trajectory::sample_seeded;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize) -> Arc<TrajectoryBatch> {
        let cfg = BaseMeasureConfig { t_steps: 30, seed: 2, ..Default::default() };
        Arc::new(sample_seeded(&cfg, n).unwrap())
    }

    fn sampler() -> SamplerConfig {
        SamplerConfig { max_time_bound: 5, ..Default::default() }
    }

    #[test]
    fn negation_flips_raw_kernel() {
        let cfg = KernelConfig::new(batch(50), false);
        let f = Formula::eventually(Interval::bounded(1, 4), Formula::ge(0, 0.3));
        let kff = kernel(&f, &f, &cfg).unwrap();
        assert!(kff >= 0.0);
        assert_eq!(kernel(&f, &Formula::not(f.clone()), &cfg).unwrap(), -kff);
    }

    #[test]
    fn normalized_self_kernel_is_one() {
        let cfg = KernelConfig::new(batch(50), true);
        let f = Formula::le(1, 0.2);
        assert!((kernel(&f, &f, &cfg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_set_shapes_and_identity() {
        let kcfg = KernelConfig::new(batch(40), true);
        let a = make_anchor_set(8, &sampler(), kcfg.clone(), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.dim(), 8);
        let b = make_anchor_set(8, &sampler(), kcfg.clone(), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.id(), b.id());
        let one = make_anchor_set(1, &sampler(), kcfg, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(one.dim(), 1);
        for (j, psi) in a.anchors().iter().enumerate() {
            let e = a.embed(psi).unwrap();
            assert_eq!(e.dim(), 8);
            assert!((e.values[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_embedding_is_odd_under_negation() {
        let kcfg = KernelConfig::new(batch(40), false);
        let a = make_anchor_set(6, &sampler(), kcfg, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = Formula::globally(Interval::bounded(0, 3), Formula::ge(0, -0.5));
        let e = a.embed(&f).unwrap();
        let n = a.embed(&Formula::not(f)).unwrap();
        for (x, y) in e.values.iter().zip(&n.values) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn gram_diagonal_matches_pairwise() {
        for normalized in [false, true] {
            let cfg = KernelConfig::new(batch(30), normalized);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let fs: Vec<Formula> = (0..6)
                .map(|_| sample_fitting(&sampler(), 30, &mut rng).unwrap())
                .collect();
            let g = gram_matrix(&fs, &cfg).unwrap();
            for i in 0..fs.len() {
                assert_eq!(g[i][i], kernel(&fs[i], &fs[i], &cfg).unwrap());
                for j in 0..fs.len() {
                    assert_eq!(g[i][j], g[j][i]);
                    assert_eq!(g[i][j], kernel(&fs[i], &fs[j], &cfg).unwrap());
                }
            }
        }
    }

    #[test]
    fn degenerate_formula_rejected_when_normalizing() {
        // x_0 >= 0 and x_0 <= 0 on an all-zero batch has zero robustness
        let zeros = crate::trajectory::Trajectory::univariate(vec![0.0; 3]).unwrap();
        let cfg = KernelConfig::new(Arc::new(TrajectoryBatch::new(vec![zeros]).unwrap()), true);
        let f = Formula::ge(0, 0.0);
        assert!(matches!(kernel(&f, &f, &cfg), Err(Error::DegenerateFormula { .. })));
    }

    #[test]
    fn anchor_set_file_round_trip() {
        let kcfg = KernelConfig::new(batch(20), true);
        let a = make_anchor_set(5, &sampler(), kcfg, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let b = AnchorSet::load(dir.path()).unwrap();
        assert_eq!(a.id(), b.id());
        assert_eq!(a.anchors(), b.anchors());
        let f = Formula::ge(1, 0.1);
        assert_eq!(a.embed(&f).unwrap(), b.embed(&f).unwrap());
    }

    #[test]
    fn embedding_file_round_trip() {
        let rows = vec![
            Embedding { values: vec![0.5, -0.25, 1.0], anchor_set_id: "abc".into() },
            Embedding { values: vec![0.0, 0.125, -1.0], anchor_set_id: "abc".into() },
        ];
        let mut buf = Vec::new();
        write_embeddings(&mut buf, "abc", 3, &rows).unwrap();
        assert_eq!(read_embeddings(&mut buf.as_slice()).unwrap(), rows);
        let bad = vec![Embedding { values: vec![0.0], anchor_set_id: "abc".into() }];
        assert!(write_embeddings(&mut Vec::new(), "abc", 3, &bad).is_err());
    }
}
