use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use super::{RowData, StudyConfig, StudyResult};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "epsilon",
    "err_initial_L2",
    "err_total_L2",
    "order_initial",
    "order_total",
    "ref_mass_drift",
    "min_ImM",
    "min_gap",
    "runtime_s",
];

/// One parsed line of a study CSV; empty cells read as `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub epsilon: f64,
    pub err_initial: Option<f64>,
    pub err_total: Option<f64>,
    pub order_initial: Option<f64>,
    pub order_total: Option<f64>,
    pub ref_mass_drift: Option<f64>,
    pub min_im_m: Option<f64>,
    pub min_gap: Option<f64>,
    pub runtime_s: Option<f64>,
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::Other, e),
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

pub fn write_csv(result: &StudyResult, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER).map_err(csv_error(path))?;
    for (i, row) in result.rows.iter().enumerate() {
        let order = |orders: &[f64]| if i == 0 { None } else { orders.get(i - 1).copied() };
        let d: Option<&RowData> = row.data();
        let record = [
            num(row.epsilon),
            cell(d.map(|d| d.err_initial)),
            cell(d.map(|d| d.err_total)),
            cell(order(&result.order_initial)),
            cell(order(&result.order_total)),
            cell(d.map(|d| d.ref_mass_drift)),
            cell(d.map(|d| d.min_im_m)),
            cell(d.map(|d| d.min_gap)),
            cell(d.map(|d| d.runtime_s)),
        ];
        w.write_record(&record).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header = r.headers().map_err(csv_error(path))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: unexpected CSV header `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_error(path))?;
        let field = |i: usize| -> Result<Option<f64>> {
            let text = record.get(i).unwrap_or("").trim();
            if text.is_empty() {
                return Ok(None);
            }
            text.parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}: malformed number `{text}`", path.display())))
        };
        rows.push(CsvRow {
            epsilon: field(0)?
                .ok_or_else(|| Error::Config(format!("{}: row without epsilon", path.display())))?,
            err_initial: field(1)?,
            err_total: field(2)?,
            order_initial: field(3)?,
            order_total: field(4)?,
            ref_mass_drift: field(5)?,
            min_im_m: field(6)?,
            min_gap: field(7)?,
            runtime_s: field(8)?,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), num)
}

/// Human-readable diagnostics next to the CSV, including aborted rows.
pub fn write_summary(result: &StudyResult, cfg: &StudyConfig, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "T = {}", num(cfg.t_final));
    let _ = writeln!(out, "with_A1 = {}", cfg.with_a1);
    let _ = writeln!(out, "beam dt = {}", num(cfg.beam_dt()));
    for w in &cfg.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    for row in &result.rows {
        match &row.outcome {
            Ok(d) => {
                let _ = writeln!(
                    out,
                    "epsilon = {}: beams = {}, grid = {}, max|beam field| = {}, max|reference| = {}, focal time = {}, resolution change = {}, step change = {}, extrapolated points = {}",
                    num(d.epsilon),
                    d.beams,
                    d.grid_points,
                    num(d.max_beam_modulus),
                    num(d.max_reference_modulus),
                    opt(d.focal_time),
                    opt(d.resolution_change),
                    opt(d.step_change),
                    d.extrapolated_points
                );
            }
            Err(e) => {
                let _ = writeln!(out, "epsilon = {}: FAILED: {e}", num(row.epsilon));
            }
        }
    }
    std::fs::write(path, out).map_err(io_error(path))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 70.0;

/// Log-log plot of both error columns against ε with a slope-½ guide.
pub fn emit_plot(result: &StudyResult, path: &Path) -> Result<()> {
    let data: Vec<&RowData> = result.rows.iter().filter_map(|r| r.data()).collect();
    let initial: Vec<(f64, f64)> = data
        .iter()
        .filter(|d| d.err_initial > 0.0)
        .map(|d| (d.epsilon, d.err_initial))
        .collect();
    let total: Vec<(f64, f64)> = data
        .iter()
        .filter(|d| d.err_total > 0.0)
        .map(|d| (d.epsilon, d.err_total))
        .collect();
    let all: Vec<(f64, f64)> = initial.iter().chain(&total).copied().collect();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (-3.0f64, -1.0f64, -4.0f64, 0.0f64);
    if !all.is_empty() {
        let lx = all.iter().map(|p| p.0.log10());
        let ly = all.iter().map(|p| p.1.log10());
        x_lo = lx.clone().fold(f64::INFINITY, f64::min).floor();
        x_hi = lx.fold(f64::NEG_INFINITY, f64::max).ceil();
        y_lo = ly.clone().fold(f64::INFINITY, f64::min).floor();
        y_hi = ly.fold(f64::NEG_INFINITY, f64::max).ceil();
        if x_hi <= x_lo {
            x_hi = x_lo + 1.0;
        }
        if y_hi <= y_lo {
            y_hi = y_lo + 1.0;
        }
    }
    let px = |e: f64| MARGIN + (e.log10() - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v.log10() - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for d in (x_lo as i32)..=(x_hi as i32) {
        let x = px(10f64.powi(d));
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#, bottom + 20.0);
    }
    for d in (y_lo as i32)..=(y_hi as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#, left - 8.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#, 0.5 * WIDTH, HEIGHT - 20.0);
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">L2 error</text>"#,
        0.5 * HEIGHT,
        0.5 * HEIGHT
    );
    let mut series = |points: &[(f64, f64)], colour: &str, label: &str, slot: usize| {
        if !points.is_empty() {
            let path: Vec<String> = points.iter().map(|&(e, v)| format!("{:.2},{:.2}", px(e), py(v))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, path.join(" "));
            for &(e, v) in points {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"/>"#, px(e), py(v));
            }
        }
        let y = top + 18.0 + 16.0 * slot as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="1.5"/>"#, left + 10.0, left + 30.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{label}</text>"#, left + 36.0, y + 4.0);
    };
    series(&initial, "#1f77b4", "initial error", 0);
    series(&total, "#d62728", "total error", 1);
    if let Some(&(e0, v0)) = total.first().or(initial.first()) {
        let e1 = 10f64.powf(x_lo).max(e0 / 64.0);
        let v1 = v0 * (e1 / e0).sqrt();
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            px(e0),
            py(v0),
            px(e1),
            py(v1)
        );
    }
    let y = top + 50.0;
    let _ = writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="gray" stroke-dasharray="6 4"/>"#, left + 10.0, left + 30.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}">slope 1/2</text>"#, left + 36.0, y + 4.0);
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(io_error(path))
}
