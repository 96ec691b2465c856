//! CSV, JSON and SVG output of a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meshio::{mesh_svg, MeshText};
use crate::run::{LevelRecord, RunConfig, RunOutcome};

pub const CSV_HEADER: &str = "dof,residual,rate_r,delta_e,ratio_e,n_star,h1_error,wall_ms";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed report: {0}")]
    Parse(String),
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn records_csv(records: &[LevelRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{:?},{},{:?},{},{},{},{:.3}",
            r.dof,
            r.residual,
            opt(r.rate_r),
            r.delta_e,
            opt(r.ratio_e),
            r.n_star,
            opt(r.h1_error),
            r.wall_ms
        )
        .unwrap();
    }
    s
}

/// Full configuration plus per-level records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub records: Vec<LevelRecord>,
}

pub fn run_json(config: &RunConfig, records: &[LevelRecord]) -> String {
    let report = RunReport { config: config.clone(), records: records.to_vec() };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

pub fn parse_run_json(text: &str) -> Result<RunReport, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Log-log plot of the error (or the residual when no exact solution is
/// known) against the unknowns, iteration counts on a linear right axis,
/// and a reference line of slope −1/2 through the last point.
pub fn convergence_svg(records: &[LevelRecord]) -> Result<String, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let with_error = records.iter().all(|r| r.h1_error.is_some());
    let label = if with_error { "H1 error" } else { "residual" };
    let series: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.dof as f64, if with_error { r.h1_error.unwrap_or(f64::NAN) } else { r.residual }))
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .collect();
    let (w, h, left, right, top, bottom) = (720.0, 480.0, 70.0, 60.0, 20.0, 50.0);
    let xs = series.iter().map(|p| p.0.log10());
    let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min).floor(), xs.fold(f64::NEG_INFINITY, f64::max).ceil());
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let (last_x, last_y) = *series.last().unwrap_or(&(1.0, 1.0));
    let reference = |x: f64| last_y * (x / last_x).powf(-0.5);
    let ys = series
        .iter()
        .map(|p| p.1)
        .chain([reference(10f64.powf(x0)), reference(10f64.powf(x1))])
        .map(f64::log10);
    let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min).floor(), ys.fold(f64::NEG_INFINITY, f64::max).ceil());
    let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0 - 1.0, y0 + 1.0) };
    let nmax = records.iter().map(|r| r.n_star).max().unwrap_or(1).max(1) as f64;

    let px = |lx: f64| left + (lx - x0) / (x1 - x0) * (w - left - right);
    let py = |ly: f64| top + (y1 - ly) / (y1 - y0) * (h - top - bottom);
    let pn = |n: f64| top + (1.0 - n / (nmax * 1.1)) * (h - top - bottom);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - left - right, h - top - bottom).unwrap();
    for d in (x0 as i32)..=(x1 as i32) {
        let x = px(d as f64);
        writeln!(s, r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{}" stroke="#ddd"/>"##, h - bottom).unwrap();
        writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"#, h - bottom + 16.0).unwrap();
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(d as f64);
        writeln!(s, r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, w - right).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, left - 6.0, y + 4.0).unwrap();
    }
    let step = ((nmax / 5.0).ceil()).max(1.0) as usize;
    for n in (0..=nmax as usize).step_by(step) {
        writeln!(s, r#"<text x="{}" y="{:.1}" fill="green">{n}</text>"#, w - right + 6.0, pn(n as f64) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">degrees of freedom</text>"#, (left + w - right) / 2.0, h - 10.0).unwrap();
    writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{label}</text>"#, h / 2.0, h / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" transform="rotate(90 {} {})" text-anchor="middle" fill="green">iterations</text>"#, w - 12.0, h / 2.0, w - 12.0, h / 2.0).unwrap();

    let (ra, rb) = (10f64.powf(x0), 10f64.powf(x1));
    writeln!(
        s,
        r#"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
        px(x0),
        py(reference(ra).log10()),
        px(x1),
        py(reference(rb).log10())
    )
    .unwrap();
    let pts: Vec<String> = series.iter().map(|(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10()))).collect();
    writeln!(s, r#"<polyline class="{}" points="{}" fill="none" stroke="royalblue" stroke-width="2"/>"#, label.replace(' ', "_"), pts.join(" ")).unwrap();
    for (x, y) in &series {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="royalblue"/>"#, px(x.log10()), py(y.log10())).unwrap();
    }
    for r in records {
        if r.dof > 0 {
            let x = px((r.dof as f64).log10());
            let y = pn(r.n_star as f64);
            writeln!(s, r#"<rect class="iterations" x="{:.2}" y="{:.2}" width="6" height="6" fill="green"/>"#, x - 3.0, y - 3.0).unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn write(path: &Path, content: &str) -> Result<(), ReportError> {
    std::fs::write(path, content).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

/// Writes `run.csv`, `run.json`, `convergence.svg`, `final_mesh.txt` and,
/// when indicators are available, `indicators.txt` and `indicators.svg`
/// into `dir`. Returns the written paths.
pub fn write_reports(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if outcome.records.is_empty() {
        return Err(ReportError::Empty);
    }
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut files: Vec<(PathBuf, String)> = vec![
        (dir.join("run.csv"), records_csv(&outcome.records)),
        (dir.join("run.json"), run_json(&outcome.config, &outcome.records)),
        (dir.join("convergence.svg"), convergence_svg(&outcome.records)?),
        (dir.join("final_mesh.txt"), MeshText::from_mesh(&outcome.mesh, None).render()),
    ];
    if let Some((mesh, values)) = &outcome.last_indicators {
        files.push((dir.join("indicators.txt"), MeshText::from_mesh(mesh, Some(values)).render()));
        files.push((dir.join("indicators.svg"), mesh_svg(mesh, Some(values))));
    }
    for (path, content) in &files {
        write(path, content)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
