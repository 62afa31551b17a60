//! `stldec`: seeded pipelines for anchor sets, datasets, decoder training,
//! decoding, evaluation, retrieval stores and requirement mining.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::commands::{anchors, data, decode, eval, mine, report, train, Outcome};
pub use crate::error::{CliError, Result};
use crate::manifest::{manifest_path, record, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "stldec", version, about, args_override_self = true)]
pub struct Cli {
    /// Worker threads for parallel stages (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Key-value config file, or a run manifest to replay. Command-line
    /// flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Sample a kernel trajectory batch and an anchor set.
    #[command(args_override_self = true)]
    MakeAnchors(anchors::MakeAnchorsArgs),
    /// Build a training set from a depth recipe.
    #[command(args_override_self = true)]
    GenData(data::GenDataArgs),
    /// Build the balanced, out-of-distribution and worst-case test sets.
    #[command(args_override_self = true)]
    GenTestsets(data::GenTestsetsArgs),
    /// Train the decoder on a dataset.
    #[command(args_override_self = true)]
    Train(train::TrainArgs),
    /// Decode embeddings of formulae or of a test set.
    #[command(args_override_self = true)]
    Decode(decode::DecodeArgs),
    /// Embed formulae into a nearest-neighbour store.
    #[command(args_override_self = true)]
    BuildStore(data::BuildStoreArgs),
    /// Score a checkpoint or a retrieval store on a test set.
    #[command(args_override_self = true)]
    Eval(eval::EvalArgs),
    /// Mine a discriminating formula on a synthetic problem.
    #[command(args_override_self = true)]
    Mine(mine::MineArgs),
    /// Render figures and a summary from evaluation reports and training logs.
    #[command(args_override_self = true)]
    Report(report::ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MakeAnchors(_) => "make-anchors",
            Command::GenData(_) => "gen-data",
            Command::GenTestsets(_) => "gen-testsets",
            Command::Train(_) => "train",
            Command::Decode(_) => "decode",
            Command::BuildStore(_) => "build-store",
            Command::Eval(_) => "eval",
            Command::Mine(_) => "mine",
            Command::Report(_) => "report",
        }
    }

    fn execute(&self) -> Result<Outcome> {
        match self {
            Command::MakeAnchors(a) => anchors::make_anchors(a),
            Command::GenData(a) => data::gen_data(a),
            Command::GenTestsets(a) => data::gen_testsets(a),
            Command::Train(a) => train::train(a),
            Command::Decode(a) => decode::decode(a),
            Command::BuildStore(a) => data::build_store(a),
            Command::Eval(a) => eval::eval(a),
            Command::Mine(a) => mine::mine(a),
            Command::Report(a) => report::report(a),
        }
    }
}

const COMMANDS: [&str; 9] = [
    "make-anchors",
    "gen-data",
    "gen-testsets",
    "train",
    "decode",
    "build-store",
    "eval",
    "mine",
    "report",
];

/// Finds `--config PATH` and the subcommand position without a full parse,
/// since a config file may supply required flags.
fn scan_config(args: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let (mut config, mut sub) = (None, None);
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if a == "--threads" {
            i += 2;
            continue;
        } else if sub.is_none() && COMMANDS.contains(&a.as_ref()) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Inserts the config entries right after the subcommand name, so flags
/// given on the command line win.
fn merge_config(args: &[OsString], path: &std::path::Path, at: usize) -> Result<Vec<OsString>> {
    let cfg = config::load(path)?;
    let name = args[at].to_string_lossy();
    if let Some(c) = &cfg.command {
        if c != &name {
            return Err(CliError::Usage(format!("{} records command {c}, not {name}", path.display())));
        }
    }
    let mut merged = args[..=at].to_vec();
    merged.extend(cfg.flags());
    merged.extend_from_slice(&args[at + 1..]);
    Ok(merged)
}

fn write_manifest(cli: &Cli, out: &Outcome) -> Result<()> {
    let Some(target) = &out.manifest_at else {
        return Ok(());
    };
    let inputs: Vec<(&str, &std::path::Path)> = out.inputs.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    let outputs: Vec<(&str, &std::path::Path)> = out.outputs.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    let m = RunManifest {
        tool: "stldec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command.name().into(),
        config: serde_json::to_value(&cli.command)?,
        inputs: record(&inputs)?,
        outputs: record(&outputs)?,
        summary: out.summary.clone(),
    };
    m.save(&manifest_path(target))
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // A pool may already exist when running in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.command.execute()?;
    write_manifest(cli, &out)?;
    if !out.summary.is_null() {
        // A closed pipe downstream is not an error of the run.
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out.summary)?);
    }
    Ok(())
}

/// Runs one invocation and returns its exit status: 0 on success, 2 for
/// usage errors, 1 for pipeline errors. Errors are reported on stderr as a
/// one-line JSON record.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let (Some(path), Some(at)) = scan_config(&args) {
        match merge_config(&args, &path, at) {
            Ok(m) => args = m,
            Err(e) => {
                eprintln!("{}", e.record(Some(&args[at].to_string_lossy())));
                return e.exit_code();
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.record(Some(cli.command.name())));
            e.exit_code()
        }
    }
}
