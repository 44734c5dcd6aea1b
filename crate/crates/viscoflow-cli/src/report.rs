//! Run outputs: residual history CSV (RFC 4180), stats JSON, and a
//! log-scale residual plot as standalone SVG.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use viscoflow::{ModelParams, Result, SolveReport};

/// Everything needed to reproduce and interpret a run.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunStats {
    pub case: String,
    pub nx: usize,
    pub model: ModelParams,
    pub tol: f64,
    pub max_iters: usize,
    pub use_projection: bool,
    pub init: String,
    pub report: SolveReport,
}

pub fn write_csv(report: &SolveReport, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "iteration,absolute,relative\r\n")?;
    for (i, (abs, rel)) in report.residuals.iter().zip(&report.relative_residuals).enumerate() {
        write!(out, "{i},{abs},{rel}\r\n")?;
    }
    Ok(())
}

pub fn write_stats(stats: &RunStats, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(stats)
        .map_err(|e| viscoflow::Error::InvalidArgument(format!("stats serialization: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Residual curve on a log10 scale, SVG 1.1.
pub fn write_svg(report: &SolveReport, path: &Path) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 70.0; // left margin
    const MB: f64 = 50.0; // bottom margin
    const MT: f64 = 20.0;
    const MR: f64 = 20.0;

    let rel = &report.relative_residuals;
    let n = rel.len().max(2);
    let logs: Vec<f64> = rel.iter().map(|r| r.max(1e-300).log10()).collect();
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for &v in &logs {
        lo = lo.min(v.floor());
        hi = hi.max(v.ceil());
    }

    let x = |i: usize| ML + (W - ML - MR) * i as f64 / (n - 1) as f64;
    let y = |v: f64| MT + (H - MT - MB) * (hi - v) / (hi - lo);

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    // Decade grid lines and labels.
    let mut decade = lo;
    while decade <= hi + 0.5 {
        let yy = y(decade);
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{yy:.2}\" x2=\"{}\" y2=\"{yy:.2}\" stroke=\"#dddddd\"/>\n",
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">1e{}</text>\n",
            ML - 6.0,
            yy + 4.0,
            decade as i64
        ));
        decade += 1.0;
    }
    for i in 0..rel.len() {
        if rel.len() <= 16 || i % (rel.len() / 8).max(1) == 0 {
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{i}</text>\n",
                x(i),
                H - MB + 18.0
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">iteration</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">relative residual</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    // The curve.
    let points: Vec<String> = logs
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    for (i, &v) in logs.iter().enumerate() {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#c0392b\"/>\n",
            x(i),
            y(v)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use viscoflow::{Law, ModelParams};

    fn sample_report() -> SolveReport {
        SolveReport {
            iterations: 3,
            residuals: vec![8.0, 4.0, 0.5, 8e-10],
            relative_residuals: vec![1.0, 0.5, 0.0625, 1e-10],
            converged: true,
            active_cells: 30,
            active_fraction: 0.75,
        }
    }

    #[test]
    fn csv_has_header_plus_iterations_plus_one_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("residual.csv");
        let report = sample_report();
        write_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\r\n"));
        let rows: Vec<&str> = text.split("\r\n").filter(|l| !l.is_empty()).collect();
        assert_eq!(rows.len(), 1 + report.iterations + 1);
        assert_eq!(rows[0], "iteration,absolute,relative");
    }

    #[test]
    fn stats_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        let stats = RunStats {
            case: "reservoir".into(),
            nx: 32,
            model: ModelParams::new(Law::HerschelBulkley, 1.75, 1.0, 10.0, 1e3).unwrap(),
            tol: 1e-10,
            max_iters: 50,
            use_projection: true,
            init: "stokes".into(),
            report: sample_report(),
        };
        write_stats(&stats, &path).unwrap();
        let parsed: RunStats =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed, stats);
        assert_eq!(parsed.report, stats.report);
    }

    #[test]
    fn svg_is_well_formed_xml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("residual.svg");
        write_svg(&sample_report(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<?xml version=\"1.0\""));
        assert!(text.trim_end().ends_with("</svg>"));
        // Every opened tag is closed or self-closing; a cheap balance check
        // on the tags the writer emits.
        for tag in ["svg", "polyline", "line", "rect", "circle", "text"] {
            let opens = text.matches(&format!("<{tag}")).count();
            let closed = text.matches(&format!("</{tag}>")).count()
                + text
                    .split(&format!("<{tag}"))
                    .skip(1)
                    .filter(|chunk| chunk.split('>').next().unwrap_or("").ends_with('/'))
                    .count();
            assert_eq!(opens, closed, "unbalanced <{tag}>");
        }
    }
}
