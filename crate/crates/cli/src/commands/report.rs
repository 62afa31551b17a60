use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use serde_json::json;
use stl_eval::plot::{plot_metric_distributions, plot_validity_curve, read_validity_curve};
use stl_eval::{EvalReport, Metric};

use super::{existing, Outcome};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Evaluation report JSON (repeatable).
    #[arg(long)]
    pub eval: Vec<PathBuf>,
    /// Training `metrics.csv` for the validity curve.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    if args.eval.is_empty() && args.metrics.is_none() {
        return Err(CliError::Usage("give --eval and/or --metrics".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut table = String::from("| report | source | testset | n | validity | median d | median cos | median diff | d ref pct |\n");
    table += "|---|---|---|---|---|---|---|---|---|\n";
    let mut rows = Vec::new();
    for (i, p) in args.eval.iter().enumerate() {
        let rep = EvalReport::load(existing(p)?)?;
        let stem = p.file_stem().map_or_else(|| format!("report{i}"), |s| s.to_string_lossy().into_owned());
        let svg = args.out.join(format!("{stem}.svg"));
        plot_metric_distributions(&rep, &svg)?;
        inputs.push((format!("eval{i}"), p.clone()));
        outputs.push((format!("plot{i}"), svg));
        let med = |m| rep.summary(m).map(|s| s.quantiles.median);
        let pct = rep.summary(Metric::D).map(|s| s.reference_percentile.median);
        writeln!(
            table,
            "| {stem} | {} | {} | {} | {:.4} | {} | {} | {} | {} |",
            rep.meta.source,
            rep.meta.testset_kind,
            rep.n,
            rep.validity_rate,
            fmt_opt(med(Metric::D)),
            fmt_opt(med(Metric::Cos)),
            fmt_opt(med(Metric::Diff)),
            fmt_opt(pct),
        )
        .expect("writing to a String");
        rows.push(json!({
            "report": stem,
            "source": rep.meta.source,
            "testset": rep.meta.testset_kind,
            "n": rep.n,
            "validity_rate": rep.validity_rate,
            "median_d": med(Metric::D),
            "median_cos": med(Metric::Cos),
            "median_diff": med(Metric::Diff),
            "median_d_reference_percentile": pct,
        }));
    }
    let mut curve = None;
    if let Some(m) = &args.metrics {
        let csv = std::fs::read_to_string(m).map_err(CliError::io(m))?;
        let points = read_validity_curve(&csv)?;
        let svg = args.out.join("validity.svg");
        plot_validity_curve(&points, &svg)?;
        inputs.push(("metrics".into(), m.clone()));
        outputs.push(("validity_plot".into(), svg));
        curve = points.last().copied();
    }
    let md = args.out.join("summary.md");
    std::fs::write(&md, &table).map_err(CliError::io(&md))?;
    outputs.push(("summary".into(), md));
    eprint!("{table}");
    Ok(Outcome {
        manifest_at: Some(args.out.clone()),
        inputs,
        outputs,
        summary: json!({ "reports": rows, "last_validity_point": curve }),
    })
}
