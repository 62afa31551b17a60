use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use stl_core::dataset::Dataset;
use stl_core::{parse, Embedding};
use stl_decoder::{decode_many, Checkpoint};

use super::{existing, create_parent, load_anchors, DecodeOpts, Outcome};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Needed to embed `--formula` inputs.
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// Formula to embed and decode (repeatable).
    #[arg(long, allow_hyphen_values = true)]
    pub formula: Vec<String>,
    /// Dataset whose stored embeddings are decoded.
    #[arg(long)]
    pub testset: Option<PathBuf>,
    /// JSON-lines output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub decode: DecodeOpts,
}

#[derive(Debug, Serialize)]
struct DecodedRow {
    index: usize,
    input: String,
    decoded: String,
    parses: bool,
}

pub fn decode(args: &DecodeArgs) -> Result<Outcome> {
    let ckpt = Checkpoint::load(existing(&args.ckpt)?)?;
    let dcfg = args.decode.config(ckpt.config().max_seq_len)?;
    let mut inputs = vec![("checkpoint".to_string(), args.ckpt.clone())];
    let mut sources: Vec<String> = Vec::new();
    let mut embeddings: Vec<Embedding> = Vec::new();
    if !args.formula.is_empty() {
        let dir = args
            .anchors
            .as_ref()
            .ok_or_else(|| CliError::Usage("--formula needs --anchors".into()))?;
        let a = load_anchors(dir)?;
        inputs.push(("anchors".into(), dir.clone()));
        for text in &args.formula {
            let f = parse(text).map_err(|e| CliError::Usage(format!("{text:?}: {e}")))?;
            embeddings.push(a.embed(&f.rounded())?);
            sources.push(text.clone());
        }
    }
    if let Some(p) = &args.testset {
        let ds = Dataset::load(existing(p)?)?;
        inputs.push(("testset".into(), p.clone()));
        for r in &ds.records {
            sources.push(r.formula_text.clone());
            embeddings.push(ds.embedding(r).clone());
        }
    }
    if embeddings.is_empty() {
        return Err(CliError::Usage("nothing to decode: give --formula or --testset".into()));
    }
    let decoded = decode_many(&embeddings, &ckpt, &dcfg)?;
    let mut text = String::new();
    let mut n_parse = 0;
    for (index, (input, d)) in sources.into_iter().zip(decoded).enumerate() {
        let parses = parse(&d).is_ok();
        n_parse += usize::from(parses);
        text += &serde_json::to_string(&DecodedRow {
            index,
            input,
            decoded: d,
            parses,
        })?;
        text.push('\n');
    }
    let summary = json!({"decoded": embeddings.len(), "parsed": n_parse, "decode": dcfg});
    match &args.out {
        Some(out) => {
            create_parent(out)?;
            std::fs::write(out, text).map_err(CliError::io(out))?;
            Ok(Outcome {
                manifest_at: Some(out.clone()),
                inputs,
                outputs: vec![("decoded".into(), out.clone())],
                summary,
            })
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(CliError::io("<stdout>"))?;
            Ok(Outcome::default())
        }
    }
}
