//! Run manifests: the resolved configuration of a command together with
//! content hashes of what it read and wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub inputs: BTreeMap<String, PathHash>,
    pub outputs: BTreeMap<String, PathHash>,
    pub summary: Value,
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let p = entry.map_err(CliError::io(dir))?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else if p.file_name().is_none_or(|n| n != MANIFEST_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn file_digest(p: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(p).map_err(CliError::io(p))?)))
}

/// SHA-256 of a file, or of the sorted `(relative path, file digest)` list
/// of a directory. Run manifests inside the directory are skipped.
pub fn hash_path(p: &Path) -> Result<String> {
    if !p.is_dir() {
        return file_digest(p);
    }
    let mut files = Vec::new();
    files_under(p, &mut files)?;
    let mut rel: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|f| (f.strip_prefix(p).unwrap_or(&f).to_string_lossy().replace('\\', "/"), f))
        .collect();
    rel.sort();
    let mut h = Sha256::new();
    for (name, f) in rel {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(file_digest(&f)?.as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

pub fn record(paths: &[(&str, &Path)]) -> Result<BTreeMap<String, PathHash>> {
    paths
        .iter()
        .map(|(name, p)| {
            Ok((
                name.to_string(),
                PathHash {
                    path: p.to_path_buf(),
                    sha256: hash_path(p)?,
                },
            ))
        })
        .collect()
}

/// `<dir>/run-manifest.json` for a directory output, `<file>.manifest.json`
/// next to a file output.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join(MANIFEST_FILE)
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
