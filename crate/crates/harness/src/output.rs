//! CSV records and SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::Method;
use crate::error::{HarnessError, Result};
use crate::experiment::{RunRecord, Summary};

pub const CSV_HEADER: [&str; 7] = ["run", "seed", "method", "metric_mse", "metric_pd", "epochs", "wall_time_s"];

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::io(path, source),
        other => HarnessError::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Header row plus one line per record. Floats use Rust's shortest
/// round-trip formatting, so reading the file back is lossless.
pub fn write_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            r.metric_mse.to_string(),
            r.metric_pd.to_string(),
            r.epochs.to_string(),
            r.wall_time_s.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let bad = |field: &str| HarnessError::Format {
            path: path.to_path_buf(),
            message: format!("row {}: cannot parse {field}", i + 2),
        };
        let get = |idx: usize| row.get(idx).unwrap_or("");
        out.push(RunRecord {
            run: get(0).parse().map_err(|_| bad("run"))?,
            seed: get(1).parse().map_err(|_| bad("seed"))?,
            method: get(2).parse::<Method>().map_err(|_| bad("method"))?,
            metric_mse: get(3).parse().map_err(|_| bad("metric_mse"))?,
            metric_pd: get(4).parse().map_err(|_| bad("metric_pd"))?,
            epochs: get(5).parse().map_err(|_| bad("epochs"))?,
            wall_time_s: get(6).parse().map_err(|_| bad("wall_time_s"))?,
        });
    }
    Ok(out)
}

/// `out` itself for a single dimension, `stem_K{k}.ext` within a sweep.
pub fn sweep_path(out: &Path, k: usize, sweep: bool) -> PathBuf {
    if !sweep {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("records");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_K{k}.{ext}"),
        None => format!("{stem}_K{k}"),
    };
    out.with_file_name(name)
}

/// A line with an optional symmetric band, one point per x.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y, half_width)`.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// MSE and PD against K, one series per method with 95% bands.
pub fn sweep_panels(sweep: &[(usize, Vec<Summary>)], mse_label: &str) -> Vec<Panel> {
    let mut methods: Vec<Method> = sweep.iter().flat_map(|(_, s)| s.iter().map(|x| x.method)).collect();
    methods.sort();
    methods.dedup();
    let series = |pick: fn(&Summary) -> (f64, f64)| -> Vec<Series> {
        methods
            .iter()
            .map(|&m| Series {
                label: m.to_string(),
                points: sweep
                    .iter()
                    .filter_map(|(k, sums)| {
                        sums.iter().find(|s| s.method == m).map(|s| {
                            let (y, hw) = pick(s);
                            (*k as f64, y, hw)
                        })
                    })
                    .collect(),
            })
            .collect()
    };
    vec![
        Panel {
            title: mse_label.to_string(),
            x_label: "K".into(),
            y_label: mse_label.to_string(),
            series: series(|s| (s.mse.mean, s.mse.half_width)),
        },
        Panel {
            title: "partition distance".into(),
            x_label: "K".into(),
            y_label: "PD".into(),
            series: series(|s| (s.pd.mean, s.pd.half_width)),
        },
    ]
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn render_panel(svg: &mut String, panel: &Panel, x0: f64) {
    let points = || panel.series.iter().flat_map(|s| s.points.iter());
    let (xmin, xmax) = range(points().map(|p| p.0));
    let (ymin, ymax) = range(points().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
    let (left, top) = (x0 + MARGIN, MARGIN * 0.6);
    let (w, h) = (PANEL_W - 1.4 * MARGIN, PANEL_H - 1.6 * MARGIN);
    let sx = |x: f64| left + (x - xmin) / (xmax - xmin) * w;
    let sy = |y: f64| top + h - (y - ymin) / (ymax - ymin) * h;

    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        left + w / 2.0,
        top - 8.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        left + w / 2.0,
        top + h + 32.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        x0 + 14.0,
        top + h / 2.0,
        x0 + 14.0,
        top + h / 2.0,
        escape(&panel.y_label)
    );
    for (frac, anchor) in [(0.0, "start"), (1.0, "end")] {
        let xv = xmin + frac * (xmax - xmin);
        let yv = ymin + frac * (ymax - ymin);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}" font-size="9">{xv:.3}</text>"#,
            sx(xv),
            top + h + 14.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="9">{yv:.3}</text>"#,
            left - 4.0,
            sy(yv) + 3.0
        );
    }

    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if s.points.iter().any(|p| p.2 > 0.0) {
            let upper = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + p.2)));
            let lower = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - p.2)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                sx(p.0),
                sy(p.1)
            );
        }
        let ly = top + 12.0 + 13.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="10" fill="{color}">{}</text>"#,
            left + 6.0,
            escape(&s.label)
        );
    }
}

/// Panels side by side in one standalone SVG document.
pub fn render_svg(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut svg, panel, i as f64 * PANEL_W);
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_plot(panels: &[Panel], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(panels)).map_err(|e| HarnessError::io(path, e))
}
