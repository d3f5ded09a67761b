//! CSV, JSON and SVG emission with write-then-rename.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::run::{Cell, PlotStyle, RunReport};
use crate::CliError;

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so `path` never holds a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::F(x) => x.to_string(),
        Cell::U(n) => n.to_string(),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::F(x) => json!(x),
        Cell::U(n) => json!(n),
    }
}

pub fn csv_string(report: &RunReport) -> String {
    let mut out = report.columns.join(",");
    out.push('\n');
    for row in &report.rows {
        out.push_str(&row.iter().map(cell_text).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Pretty-printed JSON; `wall_time_s` is the last field, on its own line.
pub fn json_string(report: &RunReport) -> String {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| Value::Object(report.columns.iter().zip(r).map(|(k, c)| (k.to_string(), cell_json(c))).collect()))
        .collect();
    let doc = json!({
        "artifact": "qqm-lab",
        "version": report.version,
        "kind": report.kind.as_str(),
        "seed": report.seed,
        "config": report.config_echo,
        "result": report.result,
        "columns": report.columns,
        "rows": rows,
        "warnings": report.warnings,
        "wall_time_s": report.wall_time_s,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable report");
    s.push('\n');
    s
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal self-contained SVG of the report's plot columns.
pub fn svg_string(report: &RunReport) -> String {
    let (w, h, m) = (640.0, 400.0, 56.0);
    let plot = &report.plot;
    let value = |c: &Cell| match c {
        Cell::F(x) => *x,
        Cell::U(n) => *n as f64,
    };
    let series: Vec<Vec<(f64, f64)>> = plot
        .ys
        .iter()
        .map(|&y| {
            report
                .rows
                .iter()
                .map(|r| (value(&r[plot.x]), value(&r[y])))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .collect()
        })
        .collect();
    let pts = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 <= 0.0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    )
    .unwrap();
    writeln!(s, r#"<text x="{m}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#, m - 20.0, report.kind)
        .unwrap();
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" font-size="11" font-family="sans-serif" text-anchor="{anchor}">{text}</text>"#).unwrap();
    };
    label(&mut s, m, h - m + 16.0, "start", format!("{x0:.4}"));
    label(&mut s, w - m, h - m + 16.0, "end", format!("{x1:.4}"));
    label(&mut s, m - 4.0, h - m, "end", format!("{y0:.4}"));
    label(&mut s, m - 4.0, m + 10.0, "end", format!("{y1:.4}"));
    label(&mut s, w / 2.0, h - 12.0, "middle", report.columns[plot.x].to_string());
    for (i, (pts, &col)) in series.iter().zip(&plot.ys).enumerate() {
        let color = COLORS[i % COLORS.len()];
        match plot.style {
            PlotStyle::Line => {
                let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                )
                .unwrap();
            }
            PlotStyle::Points => {
                for &(x, y) in pts {
                    writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
                }
            }
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif" fill="{color}">{}</text>"#,
            w - m - 110.0,
            m + 16.0 + 14.0 * i as f64,
            report.columns[col]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_csv(report: &RunReport, path: &Path) -> Result<(), CliError> {
    write_atomic(path, csv_string(report).as_bytes())
}

pub fn emit_json(report: &RunReport, path: &Path) -> Result<(), CliError> {
    write_atomic(path, json_string(report).as_bytes())
}

pub fn emit_svg_plot(report: &RunReport, path: &Path) -> Result<(), CliError> {
    write_atomic(path, svg_string(report).as_bytes())
}
