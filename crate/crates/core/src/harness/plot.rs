//! Minimal self-contained SVG line plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::BoundEvaluation;
use crate::error::{Error, Result};
use crate::subgradient::RunTrace;

pub const PLOT_FILES: [&str; 3] = ["gap.svg", "consensus.svg", "bounds.svg"];

/// Values at or below this are drawn at this level on log axes.
pub const LOG_FLOOR: f64 = 1e-18;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_Y: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    fn transform(&self, y: f64) -> Option<f64> {
        if !y.is_finite() {
            return None;
        }
        if self.log_y {
            Some(y.max(LOG_FLOOR).log10())
        } else {
            Some(y)
        }
    }

    pub fn to_svg(&self) -> String {
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter_map(|&(x, y)| self.transform(y).map(|ty| (x, ty)))
                    .filter(|(x, _)| x.is_finite())
                    .collect()
            })
            .collect();
        let all = pts.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - 2.0 * MARGIN_Y;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let ylab = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3e}") };
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.0}</text>"#,
                sx(xv),
                HEIGHT - MARGIN_Y + 18.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#,
                MARGIN_LEFT - 6.0,
                sy(yv) + 4.0
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
                MARGIN_LEFT + plot_w,
                sy(yv),
                sy(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_Y + plot_h / 2.0,
            MARGIN_Y + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (idx, (s, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[idx % COLORS.len()];
            if !p.is_empty() {
                let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = MARGIN_Y + 14.0 + 18.0 * idx as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn series(name: &str, ys: impl IntoIterator<Item = f64>, dashed: bool) -> Series {
    Series {
        name: name.into(),
        points: ys.into_iter().enumerate().map(|(t, y)| (t as f64, y)).collect(),
        dashed,
    }
}

/// Writes `gap.svg`, `consensus.svg` and `bounds.svg` into `dir`.
pub fn render_plots(trace: &RunTrace, eval: &BoundEvaluation, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.is_empty() {
        return Err(Error::EmptyRange("cannot plot an empty trace".into()));
    }
    let gap = LinePlot {
        title: "Optimality gap of the running average".into(),
        x_label: "t".into(),
        y_label: "f(avg) - f*".into(),
        log_y: true,
        series: vec![series(
            "gap",
            trace.records.iter().map(|r| r.gap_running_avg.unwrap_or(f64::NAN)),
            false,
        )],
    };
    let consensus = LinePlot {
        title: "Consensus error".into(),
        x_label: "t".into(),
        y_label: "max_i |z_i - mean z|".into(),
        log_y: true,
        series: vec![
            series("consensus error", trace.records.iter().map(|r| r.consensus_error), false),
            series("deviation", trace.records.iter().map(|r| r.consensus_deviation), false),
            series("envelope", eval.envelope.iter().copied(), true),
        ],
    };
    let mut bound_series = Vec::new();
    if let Some(c) = &eval.columns {
        bound_series.push(series("lhs", c.lhs.iter().copied(), false));
        bound_series.push(series("rhs empirical", c.rhs_empirical.iter().copied(), true));
        bound_series.push(series("rhs theory", c.rhs_theory.iter().copied(), true));
    }
    let bounds = LinePlot {
        title: "Bound versus actual gap".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        log_y: true,
        series: bound_series,
    };
    let mut written = Vec::new();
    for (name, plot) in PLOT_FILES.iter().zip([gap, consensus, bounds]) {
        let path = dir.join(name);
        std::fs::write(&path, plot.to_svg())?;
        written.push(path);
    }
    Ok(written)
}
