//! Config files: plain `key = value` lines, or a run manifest whose
//! `config` object is replayed. Every entry becomes a `--key value` flag
//! placed before the command-line flags, which therefore take precedence.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    /// Subcommand recorded in a manifest.
    pub command: Option<String>,
    pub entries: Vec<(String, String)>,
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

pub fn parse_key_values(text: &str) -> Result<ConfigFile> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        entries.push((k.to_string(), unquote(v).to_string()));
    }
    Ok(ConfigFile { command: None, entries })
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

pub fn from_manifest(v: &Value) -> Result<ConfigFile> {
    let bad = || CliError::Usage("manifest has no `config` object".into());
    let obj = v.get("config").and_then(Value::as_object).ok_or_else(bad)?;
    let mut entries = Vec::new();
    for (k, v) in obj {
        match v {
            Value::Array(items) => entries.extend(items.iter().filter_map(scalar).map(|s| (k.clone(), s))),
            Value::Object(_) => return Err(CliError::Usage(format!("config key {k} holds an object"))),
            _ => entries.extend(scalar(v).map(|s| (k.clone(), s))),
        }
    }
    Ok(ConfigFile {
        command: v.get("command").and_then(Value::as_str).map(str::to_string),
        entries,
    })
}

/// Reads a `.json` manifest or a key-value file.
pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        from_manifest(&v)
    } else {
        parse_key_values(&text)
    }
}

impl ConfigFile {
    pub fn flags(&self) -> Vec<OsString> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for (k, v) in &self.entries {
            out.push(format!("--{}", k.replace('_', "-")).into());
            out.push(v.into());
        }
        out
    }
}
