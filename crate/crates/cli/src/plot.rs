//! Static SVG figures from a trace: states, error norms, control signals and
//! sliding variables.
//!
//! Polylines carry raw data coordinates and are mapped to the page by a group
//! transform, so every plotted point is a trace value written verbatim.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use odor_consensus::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    States,
    Error,
    Control,
    Manifold,
    All,
}

impl FigureKind {
    pub fn expand(self) -> Vec<FigureKind> {
        match self {
            FigureKind::All => vec![
                FigureKind::States,
                FigureKind::Error,
                FigureKind::Control,
                FigureKind::Manifold,
            ],
            k => vec![k],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            FigureKind::States => "states.svg",
            FigureKind::Error => "error.svg",
            FigureKind::Control => "control.svg",
            FigureKind::Manifold => "manifold.svg",
            FigureKind::All => unreachable!("expanded before naming"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal guide lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

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
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Figure {
    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(pts().map(|p| p.0));
        let (y0, y1) = range(pts().map(|p| p.1).chain(self.hlines.iter().map(|h| h.0)));
        let w = WIDTH - LEFT - RIGHT;
        let h = HEIGHT - TOP - BOTTOM;
        let a = w / (x1 - x0);
        let d = -h / (y1 - y0);
        let e = LEFT - a * x0;
        let f = TOP + h - d * y0;
        let page = |x: f64, y: f64| (a * x + e, d * y + f);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot-area"><rect x="{LEFT}" y="{TOP}" width="{w}" height="{h}"/></clipPath></defs>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##
        );
        for k in 0..=5 {
            let frac = k as f64 / 5.0;
            let (xv, yv) = (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0));
            let (px, _) = page(xv, y0);
            let (_, py) = page(x0, yv);
            let _ = writeln!(
                s,
                r##"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="#444"/><text x="{px}" y="{}" text-anchor="middle">{xv:.3}</text>"##,
                TOP + h,
                TOP + h + 5.0,
                TOP + h + 18.0
            );
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="#444"/><text x="{}" y="{}" text-anchor="end">{yv:.4}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">t (s)</text>"#,
            LEFT + w / 2.0,
            HEIGHT - 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + h / 2.0,
            TOP + h / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(
            s,
            r#"<g clip-path="url(#plot-area)"><g transform="matrix({a} 0 0 {d} {e} {f})" fill="none" stroke-width="1.5">"#
        );
        for (y, label) in &self.hlines {
            let _ = writeln!(
                s,
                r##"<line class="guide" data-label="{}" x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#555" stroke-dasharray="6 4" vector-effect="non-scaling-stroke"/>"##,
                escape(label)
            );
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let dash = if series.dashed {
                r#" stroke-dasharray="4 3""#
            } else {
                ""
            };
            let mut points = String::with_capacity(series.points.len() * 24);
            for (i, (x, y)) in series.points.iter().enumerate() {
                if i > 0 {
                    points.push(' ');
                }
                let _ = write!(points, "{x},{y}");
            }
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-label="{}" stroke="{color}"{dash} vector-effect="non-scaling-stroke" points="{points}"/>"#,
                escape(&series.label)
            );
        }
        s.push_str("</g></g>\n");

        let legend_x = WIDTH - RIGHT + 15.0;
        let entries = self
            .series
            .iter()
            .enumerate()
            .map(|(k, se)| (PALETTE[k % PALETTE.len()], se.label.as_str(), se.dashed))
            .chain(self.hlines.iter().map(|(_, l)| ("#555", l.as_str(), true)));
        for (k, (color, label, dashed)) in entries.enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
            let _ = writeln!(
                s,
                r#"<line x1="{legend_x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                legend_x + 22.0,
                legend_x + 28.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn axis_label(base: &str, agent: usize, axis: usize, d: usize) -> String {
    if d == 1 {
        format!("{base}{agent}")
    } else {
        format!("{base}{agent}_{axis}")
    }
}

fn per_axis(
    trace: &Trace,
    base: &str,
    dashed: bool,
    pick: impl Fn(&odor_consensus::trace::AgentSample) -> &Vec<f64>,
) -> Vec<Series> {
    let d = trace.dimension;
    let mut out = Vec::new();
    for i in 0..trace.n_agents {
        for c in 0..d {
            out.push(Series {
                label: axis_label(base, i + 1, c + 1, d),
                points: trace.records.iter().map(|r| (r.t, pick(&r.agents[i])[c])).collect(),
                dashed,
            });
        }
    }
    out
}

/// Builds one figure; `lambda1` sets the envelope on the manifold plot.
pub fn figure(trace: &Trace, kind: FigureKind, lambda1: f64) -> Figure {
    match kind {
        FigureKind::States => {
            let mut series = per_axis(trace, "x", false, |a| &a.x);
            series.extend(per_axis(trace, "ref", true, |a| &a.reference));
            Figure {
                title: "Agent states".into(),
                y_label: "x".into(),
                series,
                hlines: vec![],
            }
        }
        FigureKind::Error => {
            let mut series: Vec<Series> = (0..trace.n_agents)
                .map(|i| Series {
                    label: format!("e{}", i + 1),
                    points: trace.records.iter().map(|r| (r.t, r.agents[i].error_norm)).collect(),
                    dashed: false,
                })
                .collect();
            series.push(Series {
                label: "tracking_error".into(),
                points: trace.records.iter().map(|r| (r.t, r.tracking_error)).collect(),
                dashed: true,
            });
            Figure {
                title: "Norm of tracking errors".into(),
                y_label: "|e|".into(),
                series,
                hlines: vec![],
            }
        }
        FigureKind::Control => Figure {
            title: "Control signals".into(),
            y_label: "u".into(),
            series: per_axis(trace, "u", false, |a| &a.u),
            hlines: vec![],
        },
        FigureKind::Manifold => Figure {
            title: "Sliding variables".into(),
            y_label: "s".into(),
            series: per_axis(trace, "s", false, |a| &a.s),
            hlines: vec![
                (lambda1, format!("+lambda1 = {lambda1}")),
                (-lambda1, format!("-lambda1 = {}", -lambda1)),
            ],
        },
        FigureKind::All => unreachable!("expanded by the caller"),
    }
}

/// Writes the selected figures into `out` and returns their paths.
pub fn write_figures(trace: &Trace, kind: FigureKind, lambda1: f64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for k in kind.expand() {
        let path = out.join(k.file_name());
        std::fs::write(&path, figure(trace, k, lambda1).to_svg())
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
