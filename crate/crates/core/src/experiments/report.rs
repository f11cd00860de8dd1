//! Report files: `records.csv`, `report.json`, `loglog.csv` and a small SVG
//! plot of the same data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::convergence::ConvergenceReport;

pub const RECORDS_HEADER: &str = "model,T,x,q,lq_error,se,bound,solver,seed";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub report_json: PathBuf,
    pub loglog: PathBuf,
    pub svg: PathBuf,
}

/// One row per (T, probe), in study order. Floats use the shortest
/// round-trip representation.
pub fn records_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from(RECORDS_HEADER);
    s.push('\n');
    for r in report.records() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.horizon,
            r.x,
            r.q,
            r.lq_error,
            r.mc_std_error,
            r.bound,
            r.solver.name(),
            r.seed
        );
    }
    s
}

/// `T, sup_error, se, fitted, bound` per horizon.
fn loglog_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from("T,sup_error,se,fitted,bound\n");
    for h in &report.horizons {
        let fitted = report
            .fit
            .map(|f| (f.intercept + f.slope * h.horizon.ln()).exp().to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", h.horizon, h.sup_error, h.sup_std_error, fitted, h.bound);
    }
    s
}

fn svg(report: &ConvergenceReport) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let pts: Vec<(f64, f64, f64)> = report
        .horizons
        .iter()
        .filter(|h| h.sup_error > 0.0)
        .map(|h| (h.horizon.ln(), h.sup_error.ln(), h.bound.ln()))
        .collect();
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if pts.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, e, b) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(e).min(b);
        y1 = y1.max(e).max(b);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
    let _ = writeln!(out, "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>", H - PAD);
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"12\">log T</text>", W / 2.0, H - 12.0);
    let _ = writeln!(out, "<text x=\"8\" y=\"{}\" font-size=\"12\">log error</text>", PAD - 16.0);
    let poly = |vals: &mut dyn Iterator<Item = (f64, f64)>| {
        vals.map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect::<Vec<_>>().join(" ")
    };
    let bound_line = poly(&mut pts.iter().map(|p| (p.0, p.2)));
    let _ = writeln!(
        out,
        "<polyline points=\"{bound_line}\" fill=\"none\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>"
    );
    if let Some(f) = report.fit {
        let line = poly(&mut [x0, x1].into_iter().map(|x| (x, f.intercept + f.slope * x)));
        let _ = writeln!(out, "<polyline points=\"{line}\" fill=\"none\" stroke=\"steelblue\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">slope {:.3}</text>",
            W - PAD - 90.0,
            PAD,
            f.slope
        );
    }
    for &(x, e, _) in &pts {
        let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"black\"/>", sx(x), sy(e));
    }
    out.push_str("</svg>\n");
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn emit_reports(report: &ConvergenceReport, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        records: dir.join("records.csv"),
        report_json: dir.join("report.json"),
        loglog: dir.join("loglog.csv"),
        svg: dir.join("convergence.svg"),
    };
    write(&files.records, &records_csv(report))?;
    write(&files.report_json, &serde_json::to_string_pretty(report)?)?;
    write(&files.loglog, &loglog_csv(report))?;
    write(&files.svg, &svg(report))?;
    Ok(files)
}

pub fn read_report(path: &Path) -> Result<ConvergenceReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentConfig;

    #[test]
    fn empty_report_writes_header_only() {
        let r = ConvergenceReport::empty(&ExperimentConfig::default());
        assert_eq!(records_csv(&r), format!("{RECORDS_HEADER}\n"));
        let dir = tempfile::tempdir().unwrap();
        let files = emit_reports(&r, dir.path()).unwrap();
        assert_eq!(read_report(&files.report_json).unwrap(), r);
        assert!(fs::read_to_string(&files.svg).unwrap().starts_with("<svg"));
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let r = ConvergenceReport::empty(&ExperimentConfig::default());
        match emit_reports(&r, &blocker.join("sub")) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("expected an I/O error, got {other:?}"),
        }
    }
}
