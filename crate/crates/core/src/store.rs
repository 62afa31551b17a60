//! Exact nearest-neighbour store over formula embeddings.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formula::Formula;
use crate::kernel::{load_embeddings, save_embeddings, AnchorSet, Embedding};
use crate::syntax::{parse, print};

#[derive(Debug, Clone)]
pub struct StoreRow {
    pub text: String,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub text: String,
    pub distance: f64,
}

/// Immutable after construction; queries are read-only and may run
/// concurrently.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    rows: Vec<StoreRow>,
    /// Row-major `rows.len() x dim`.
    matrix: Vec<f64>,
    dim: usize,
    anchor_set_id: String,
}

impl EmbeddingStore {
    /// Builds from pre-computed rows. A row whose canonical string or
    /// embedding (bit for bit) repeats an earlier row is dropped: no query can
    /// rank it above the earlier one.
    pub fn from_rows(rows: Vec<(Formula, Embedding)>, anchor_set_id: &str, dim: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut seen_keys = HashSet::new();
        let mut out = Vec::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for (f, e) in rows {
            if e.anchor_set_id != anchor_set_id {
                return Err(Error::AnchorSetMismatch {
                    expected: anchor_set_id.to_string(),
                    found: e.anchor_set_id,
                });
            }
            if e.dim() != dim {
                return Err(Error::ShapeMismatch(format!("embedding dim {} in a store of dim {dim}", e.dim())));
            }
            let text = print(&f);
            let key: Vec<u64> = e.values.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.contains(&text) && seen_keys.insert(key) {
                seen.insert(text.clone());
                matrix.extend_from_slice(&e.values);
                out.push(StoreRow { text, formula: f });
            }
        }
        Ok(EmbeddingStore {
            rows: out,
            matrix,
            dim,
            anchor_set_id: anchor_set_id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Keeps the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        self.rows.truncate(n);
        self.matrix.truncate(self.rows.len() * self.dim);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchor_set_id(&self) -> &str {
        &self.anchor_set_id
    }

    pub fn rows(&self) -> &[StoreRow] {
        &self.rows
    }

    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding {
            values: self.matrix[i * self.dim..(i + 1) * self.dim].to_vec(),
            anchor_set_id: self.anchor_set_id.clone(),
        }
    }

    pub fn contains(&self, text: &str) -> bool {
        self.rows.iter().any(|r| r.text == text)
    }

    /// The `k` rows closest to `e` in Euclidean distance, ascending, ties
    /// broken by insertion order.
    pub fn nn_query(&self, e: &Embedding, k: usize) -> Result<Vec<Neighbor>> {
        if self.rows.is_empty() {
            return Err(Error::EmptyStore);
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if e.anchor_set_id != self.anchor_set_id {
            return Err(Error::AnchorSetMismatch {
                expected: self.anchor_set_id.clone(),
                found: e.anchor_set_id.clone(),
            });
        }
        if e.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!("query dim {} against store dim {}", e.dim(), self.dim)));
        }
        let mut d2: Vec<(f64, usize)> = self
            .matrix
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let s = row.iter().zip(&e.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (s, i)
            })
            .collect();
        let k = k.min(d2.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d2.len() {
            d2.select_nth_unstable_by(k - 1, cmp);
            d2.truncate(k);
        }
        d2.sort_unstable_by(cmp);
        Ok(d2
            .into_iter()
            .map(|(s, i)| Neighbor {
                index: i,
                text: self.rows[i].text.clone(),
                distance: s.sqrt(),
            })
            .collect())
    }

    /// Writes `<stem>.txt` (one canonical formula per line) and `<stem>.emb`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(STORE_TEXT_FILE))?);
        for r in &self.rows {
            writeln!(w, "{}", r.text)?;
        }
        w.flush()?;
        let embs: Vec<Embedding> = (0..self.len()).map(|i| self.embedding(i)).collect();
        save_embeddings(dir.join(STORE_EMB_FILE), &self.anchor_set_id, self.dim, &embs)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let texts = BufReader::new(File::open(dir.join(STORE_TEXT_FILE))?)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?;
        let embs = load_embeddings(dir.join(STORE_EMB_FILE))?;
        if texts.len() != embs.len() {
            return Err(Error::Format(format!("{} formulae but {} embeddings", texts.len(), embs.len())));
        }
        let (id, dim) = match embs.first() {
            Some(e) => (e.anchor_set_id.clone(), e.dim()),
            None => return Err(Error::EmptyStore),
        };
        let rows = texts
            .iter()
            .zip(embs)
            .map(|(t, e)| Ok((parse(t)?, e)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows, &id, dim)
    }
}

pub const STORE_TEXT_FILE: &str = "store.txt";
pub const STORE_EMB_FILE: &str = "store.emb";

/// Embeds `formulae` under `a` (in parallel) and indexes them.
pub fn store_build(formulae: &[Formula], a: &AnchorSet) -> Result<EmbeddingStore> {
    let rows = formulae
        .par_iter()
        .map(|f| Ok((f.clone(), a.embed(f)?)))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingStore::from_rows(rows, a.id(), a.dim())
}
