//! Static SVG figures: metric histograms for a report and the validity
//! curve of a training run.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{EvalError, Result};
use crate::report::EvalReport;

const BINS: usize = 30;

fn plot_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Plot(e.to_string())
}

fn histogram(values: &[f64]) -> (f64, f64, Vec<usize>) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / BINS as f64;
    let mut counts = vec![0; BINS];
    for &v in values {
        counts[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    (lo, hi, counts)
}

/// Histograms of `d`, `cos` and `diff` over the valid records.
pub fn plot_metric_distributions(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let valid: Vec<_> = report.records.iter().filter(|r| r.valid).collect();
    let panels: [(&str, Vec<f64>); 3] = [
        ("d", valid.iter().filter_map(|r| r.d).collect()),
        ("cos", valid.iter().filter_map(|r| r.cos).collect()),
        ("diff", valid.iter().filter_map(|r| r.diff).collect()),
    ];
    let root = SVGBackend::new(path.as_ref(), (1200, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    for (area, (name, values)) in root.split_evenly((1, 3)).iter().zip(panels) {
        if values.is_empty() {
            continue;
        }
        let (lo, hi, counts) = histogram(&values);
        let top = *counts.iter().max().unwrap_or(&1) as f64 * 1.05;
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{name} (n = {})", values.len()), ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(lo..hi, 0.0..top)
            .map_err(plot_err)?;
        chart.configure_mesh().disable_x_mesh().draw().map_err(plot_err)?;
        let width = (hi - lo) / BINS as f64;
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &c)| {
                let x0 = lo + i as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, c as f64)], BLUE.mix(0.6).filled())
            }))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

/// `(step, validity_rate)` rows of a training metrics CSV.
pub fn read_validity_curve(csv: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (i, line) in csv.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(EvalError::InvalidConfig(format!("metrics line {} has {} columns", i + 1, cols.len())));
        }
        if cols[3].is_empty() {
            continue;
        }
        let parse_err = |e: &dyn std::fmt::Display| EvalError::InvalidConfig(format!("metrics line {}: {e}", i + 1));
        let step = cols[0].parse().map_err(|e| parse_err(&e))?;
        let v = cols[3].parse().map_err(|e| parse_err(&e))?;
        out.push((step, v));
    }
    Ok(out)
}

/// Validity rate against training step.
pub fn plot_validity_curve(points: &[(usize, f64)], path: impl AsRef<Path>) -> Result<()> {
    let root = SVGBackend::new(path.as_ref(), (800, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let last = points.iter().map(|p| p.0).max().unwrap_or(1).max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption("validity rate", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0..last, 0.0..1.0)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("valid fraction")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), RED.stroke_width(2)))
        .map_err(plot_err)?;
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, RED.filled())))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_all_values() {
        let (lo, hi, c) = histogram(&[0.0, 1.0, 1.0, 0.5]);
        assert_eq!((lo, hi), (0.0, 1.0));
        assert_eq!(c.iter().sum::<usize>(), 4);
        assert_eq!(c[BINS - 1], 2);
        let (_, _, c) = histogram(&[2.0, 2.0]);
        assert_eq!(c.iter().sum::<usize>(), 2);
    }

    #[test]
    fn validity_curve_parsing_skips_unprobed_rows() {
        let csv = "step,loss,lr,validity_rate\n50,2.1,1e-4,\n100,1.9,2e-4,0.5\n";
        assert_eq!(read_validity_curve(csv).unwrap(), vec![(100, 0.5)]);
        assert!(read_validity_curve("h\n1,2\n").is_err());
    }

    #[test]
    fn curve_svg_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.svg");
        plot_validity_curve(&[(100, 0.2), (200, 0.7)], &p).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert!(s.starts_with("<svg") && s.contains("validity rate"));
    }
}
