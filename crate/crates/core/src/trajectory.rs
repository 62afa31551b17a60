//! Discrete-time multivariate trajectories and the random-walk base measure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio::{self, Hasher};
use crate::error::{Error, Result};

/// Values on the uniform grid `t = 0..t_steps`, stored time-major
/// (`values[t * n_vars + i]` is variable `i` at step `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: Vec<f64>,
    t_steps: usize,
    n_vars: usize,
}

impl Trajectory {
    pub fn new(values: Vec<f64>, t_steps: usize, n_vars: usize) -> Result<Self> {
        if t_steps == 0 || n_vars == 0 {
            return Err(Error::ShapeMismatch("trajectory needs t_steps >= 1 and n_vars >= 1".into()));
        }
        if values.len() != t_steps * n_vars {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {t_steps}x{n_vars} trajectory",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("trajectory values must be finite".into()));
        }
        Ok(Trajectory { values, t_steps, n_vars })
    }

    /// One-variable trajectory.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, n, 1)
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    #[inline]
    pub fn get(&self, t: usize, var: usize) -> f64 {
        self.values[t * self.n_vars + var]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds `c` to every sample of variable `var`.
    pub fn shifted(&self, var: usize, c: f64) -> Trajectory {
        let mut out = self.clone();
        for t in 0..self.t_steps {
            out.values[t * self.n_vars + var] += c;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasureConfig {
    pub t_steps: usize,
    pub n_vars: usize,
    pub init_std: f64,
    pub step_std: f64,
    pub seed: u64,
}

impl Default for BaseMeasureConfig {
    fn default() -> Self {
        BaseMeasureConfig {
            t_steps: 100,
            n_vars: 2,
            init_std: 1.0,
            step_std: 0.5,
            seed: 0,
        }
    }
}

impl BaseMeasureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_steps == 0 || self.n_vars == 0 {
            return Err(Error::InvalidConfig("t_steps and n_vars must be >= 1".into()));
        }
        if !(self.init_std > 0.0 && self.step_std > 0.0) {
            return Err(Error::InvalidConfig("random-walk standard deviations must be > 0".into()));
        }
        Ok(())
    }
}

/// Immutable, shape-homogeneous collection of trajectories with a content
/// hash computed over the single-precision values written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    trajectories: Vec<Trajectory>,
    id: String,
    seed: u64,
}

const BATCH_MAGIC: &[u8; 8] = b"STLTRAJ\0";
const BATCH_VERSION: u32 = 1;

impl TrajectoryBatch {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        Self::with_seed(trajectories, 0)
    }

    pub fn with_seed(trajectories: Vec<Trajectory>, seed: u64) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::ShapeMismatch("trajectory batch must be non-empty".into()))?;
        let (t, n) = (first.t_steps, first.n_vars);
        if let Some(bad) = trajectories.iter().find(|x| x.t_steps != t || x.n_vars != n) {
            return Err(Error::ShapeMismatch(format!(
                "batch mixes {t}x{n} and {}x{} trajectories",
                bad.t_steps, bad.n_vars
            )));
        }
        let mut h = Hasher::new();
        h.update(&(trajectories.len() as u64).to_le_bytes())
            .update(&(t as u64).to_le_bytes())
            .update(&(n as u64).to_le_bytes());
        for x in &trajectories {
            for &v in &x.values {
                h.update(&(v as f32).to_le_bytes());
            }
        }
        Ok(TrajectoryBatch {
            trajectories,
            id: h.finish(),
            seed,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn t_steps(&self) -> usize {
        self.trajectories[0].t_steps
    }

    pub fn n_vars(&self) -> usize {
        self.trajectories[0].n_vars
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(BATCH_MAGIC)?;
        binio::write_u32(w, BATCH_VERSION)?;
        binio::write_u64(w, self.len() as u64)?;
        binio::write_u64(w, self.t_steps() as u64)?;
        binio::write_u64(w, self.n_vars() as u64)?;
        binio::write_u64(w, self.seed)?;
        for x in &self.trajectories {
            binio::write_f32s(w, x.values.iter().map(|&v| v as f32))?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, BATCH_MAGIC)?;
        let version = binio::read_u32(r)?;
        if version != BATCH_VERSION {
            return Err(Error::Format(format!("unsupported trajectory batch version {version}")));
        }
        let n = binio::read_u64(r)? as usize;
        let t = binio::read_u64(r)? as usize;
        let vars = binio::read_u64(r)? as usize;
        let seed = binio::read_u64(r)?;
        let mut trajectories = Vec::with_capacity(n);
        for _ in 0..n {
            let vals = binio::read_f32s(r, t * vars)?;
            trajectories.push(Trajectory::new(vals.into_iter().map(f64::from).collect(), t, vars)?);
        }
        Self::with_seed(trajectories, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

impl<'a> IntoIterator for &'a TrajectoryBatch {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.trajectories.iter()
    }
}

/// Rounds through `f32` so the in-memory batch equals its on-disk form.
#[inline]
pub(crate) fn quantize(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Independent Gaussian random walk per coordinate:
/// `x(0) ~ N(0, init_std²)`, `x(t+1) = x(t) + N(0, step_std²)`.
pub fn sample_trajectories<R: Rng + ?Sized>(
    cfg: &BaseMeasureConfig,
    n: usize,
    rng: &mut R,
) -> Result<TrajectoryBatch> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one trajectory".into()));
    }
    let init = Normal::new(0.0, cfg.init_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let step = Normal::new(0.0, cfg.step_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (t_steps, n_vars) = (cfg.t_steps, cfg.n_vars);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = vec![0.0; t_steps * n_vars];
        for i in 0..n_vars {
            let mut x = init.sample(rng);
            values[i] = quantize(x);
            for t in 1..t_steps {
                x += step.sample(rng);
                values[t * n_vars + i] = quantize(x);
            }
        }
        out.push(Trajectory { values, t_steps, n_vars });
    }
    TrajectoryBatch::with_seed(out, cfg.seed)
}

/// [`sample_trajectories`] driven by `cfg.seed`.
pub fn sample_seeded(cfg: &BaseMeasureConfig, n: usize) -> Result<TrajectoryBatch> {
    sample_trajectories(cfg, n, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}
