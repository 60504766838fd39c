//! Standalone SVG line plots with a log-scale y axis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config, BenchError, Result};
use crate::records::{read_csv, schema_of, TraceRecord, TRACE_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `‖∇F(x)‖²`.
    #[default]
    GradNorm,
    /// `F(x) − F_best`.
    Suboptimality,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::GradNorm => "‖∇F(x)‖²",
            Metric::Suboptimality => "F(x) − F_best",
        }
    }

    fn value(self, r: &TraceRecord) -> f64 {
        match self {
            Metric::GradNorm => r.grad_norm_sq,
            Metric::Suboptimality => r.suboptimality,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(passes, value)`; non-positive values are gaps on a log axis.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PlotStyle {
    pub title: String,
    pub metric: Metric,
    pub width: f64,
    pub height: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            title: String::new(),
            metric: Metric::GradNorm,
            width: 720.0,
            height: 480.0,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Expands directories into the trace CSVs they contain (sorted by name).
pub fn collect_trace_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(BenchError::io(input))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .filter(|p| schema_of(p).as_deref() == Some(TRACE_SCHEMA))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return config("no trace files to plot");
    }
    Ok(files)
}

/// Reads trace files into series. Legends use the algorithm name, extended
/// with `η` and seed when several files share an algorithm.
pub fn load_series(files: &[PathBuf], metric: Metric) -> Result<Vec<Series>> {
    let mut traces = Vec::with_capacity(files.len());
    for f in files {
        let rows: Vec<TraceRecord> = read_csv(f, TRACE_SCHEMA)?;
        let Some(first) = rows.first() else {
            return config(format!("{} contains no trace rows", f.display()));
        };
        let head = (first.algorithm.clone(), first.eta, first.seed);
        traces.push((head, rows));
    }
    let series = traces
        .iter()
        .map(|((alg, eta, seed), rows)| {
            let shared = traces.iter().filter(|((a, _, _), _)| a == alg).count() > 1;
            let label = if shared {
                format!("{alg} (η={eta:.3e}, seed {seed})")
            } else {
                alg.clone()
            };
            Series {
                label,
                points: rows.iter().map(|r| (r.passes, metric.value(r))).collect(),
            }
        })
        .collect();
    Ok(series)
}

/// Decade exponents covering `[lo, hi]`, thinned to at most ~10 labels.
fn decade_ticks(lo: f64, hi: f64) -> (i32, i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b == a {
        b = a + 1;
    }
    let step = ((b - a) as f64 / 10.0).ceil().max(1.0) as i32;
    (a, b, step)
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series as an SVG document.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() {
        return config("nothing to plot");
    }
    let positive = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0 && p.1.is_finite());
    if positive().next().is_none() {
        return config("no positive finite values to plot on a log axis");
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let y_lo = positive().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_hi = positive().map(|p| p.1).fold(0.0f64, f64::max);
    let (dec_lo, dec_hi, dec_step) = decade_ticks(y_lo, y_hi);

    let (w, h) = (style.width, style.height);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x / x_max * plot_w;
    let sy = |y: f64| MARGIN_TOP + (dec_hi as f64 - y.log10()) / (dec_hi - dec_lo) as f64 * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if !style.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            w / 2.0,
            escape(&style.title)
        );
    }

    // Grid and y ticks at decades.
    let mut e = dec_lo;
    while e <= dec_hi {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line class="ytick" x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
        e += dec_step;
    }
    let step = nice_step(x_max);
    let mut k = 0.0;
    while k * step <= x_max * (1.0 + 1e-9) {
        let xv = k * step;
        let x = sx(xv);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>"##,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 18.0,
            format_tick(xv)
        );
        k += 1.0;
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">effective passes</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        h - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="ylabel" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        style.metric.label()
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Split into runs of plottable points.
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in &s.points {
            if y > 0.0 && y.is_finite() {
                segments.last_mut().expect("non-empty").push((sx(x), sy(y)));
            } else if !segments.last().expect("non-empty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{}" fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                escape(&s.label),
                pts.join(" ")
            );
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 200.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v == v.round() {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Reads trace files and writes an SVG to `out`.
pub fn emit_plot(inputs: &[PathBuf], out: &Path, style: &PlotStyle) -> Result<()> {
    let files = collect_trace_files(inputs)?;
    let series = load_series(&files, style.metric)?;
    let svg = render_svg(&series, style)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(BenchError::io(parent))?;
    }
    std::fs::write(out, svg).map_err(BenchError::io(out))
}
