//! Standalone SVG learning curves: mean extrinsic return over seeds with a
//! one-standard-deviation band.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{mean_std, read_metrics};
use crate::error::{ExpError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One labelled curve: per-episode mean and band `[mean - std, mean + std]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub seeds: usize,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Runs are grouped by the directory above `seed_<n>/`, or by file stem.
pub fn group_label(path: &Path) -> String {
    let parent = path.parent();
    let in_seed_dir = parent
        .and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("seed_"));
    if in_seed_dir {
        if let Some(name) = parent.and_then(Path::parent).and_then(Path::file_name) {
            return name.to_string_lossy().into_owned();
        }
    }
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Trailing moving average over `window` points.
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return xs.to_vec();
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Band statistics over seeds, truncated to the shortest series.
pub fn curve_band(label: &str, series: &[Vec<f64>], window: usize) -> Result<Curve> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return Err(ExpError::Usage(format!("no episodes to plot for '{label}'")));
    }
    let smoothed: Vec<Vec<f64>> = series.iter().map(|s| smooth(&s[..len], window)).collect();
    let mut curve = Curve { label: label.into(), seeds: series.len(), mean: vec![], lo: vec![], hi: vec![] };
    for i in 0..len {
        let col: Vec<f64> = smoothed.iter().map(|s| s[i]).collect();
        let (m, sd) = mean_std(&col);
        curve.mean.push(m);
        curve.lo.push(m - sd);
        curve.hi.push(m + sd);
    }
    Ok(curve)
}

pub fn curves_from_csvs(paths: &[PathBuf], window: usize) -> Result<Vec<Curve>> {
    if paths.is_empty() {
        return Err(ExpError::Usage("plot needs at least one metrics csv".into()));
    }
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for p in paths {
        let rows = read_metrics(p)?;
        if rows.is_empty() {
            return Err(ExpError::Usage(format!("{} has no episodes", p.display())));
        }
        groups.entry(group_label(p)).or_default().push(rows.iter().map(|r| r.extrinsic_return).collect());
    }
    groups.iter().map(|(label, series)| curve_band(label, series, window)).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(curves: &[Curve]) -> String {
    let n = curves.iter().map(|c| c.mean.len()).max().unwrap_or(1).max(2);
    let mut y_lo = curves.iter().flat_map(|c| c.lo.iter().copied()).fold(f64::INFINITY, f64::min);
    let mut y_hi = curves.iter().flat_map(|c| c.hi.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    if !(y_hi - y_lo > 1e-12) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |i: usize| MARGIN_L + plot_w * i as f64 / (n - 1) as f64;
    let y = |v: f64| MARGIN_T + plot_h * (y_hi - v) / (y_hi - y_lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(svg, r#"<g id="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(svg, "</g>");
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{yy:.2}" x2="{x0}" y2="{yy:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, yy + 4.0);
        let i = (n - 1) * k / 4;
        let xx = x(i);
        let _ = writeln!(svg, r#"<line x1="{xx:.2}" y1="{y1}" x2="{xx:.2}" y2="{}" stroke="black"/>"#, y1 + 4.0);
        let _ = writeln!(svg, r#"<text x="{xx:.2}" y="{}" text-anchor="middle">{i}</text>"#, y1 + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#, (x0 + x1) / 2.0, HEIGHT - 8.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">extrinsic return</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut band = String::new();
        for i in 0..c.hi.len() {
            let _ = write!(band, "{:.2},{:.2} ", x(i), y(c.hi[i]));
        }
        for i in (0..c.lo.len()).rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(i), y(c.lo[i]));
        }
        let line: String = c.mean.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2} ", x(i), y(v))).collect();
        let label = escape(&c.label);
        let _ = writeln!(svg, r#"<g class="curve" data-label="{label}">"#);
        let _ = writeln!(svg, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let _ = writeln!(svg, r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.trim_end());
        let _ = writeln!(svg, "</g>");
        let ly = y0 + 16.0 * k as f64 + 8.0;
        let lx = x1 - 180.0;
        let _ = writeln!(svg, r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 18.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{label} (n={})</text></g>"#, lx + 24.0, ly + 4.0, c.seeds);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Render the curves of `metrics_csvs` to `out_svg`, smoothing each seed with
/// a trailing window of `window` episodes.
pub fn emit_plot(metrics_csvs: &[PathBuf], out_svg: &Path, window: usize) -> Result<()> {
    let curves = curves_from_csvs(metrics_csvs, window)?;
    if let Some(dir) = out_svg.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(ExpError::io(dir))?;
    }
    std::fs::write(out_svg, render_svg(&curves)).map_err(ExpError::io(out_svg))
}
