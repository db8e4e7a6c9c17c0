//! Standalone SVG convergence plots: one polyline per algorithm, log-scaled
//! loss axis, legend on the right.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::aggregate::Axis;
use crate::error::{BenchError, Result};
use crate::table::TraceTable;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 3] = ["none", "6 3", "2 3"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT)
            * if self.x_max > 0.0 {
                x / self.x_max
            } else {
                0.0
            }
    }

    fn py(&self, loss: f64) -> f64 {
        let y = loss.log10().clamp(self.y_lo, self.y_hi);
        TOP + (HEIGHT - TOP - BOTTOM) * (self.y_hi - y) / (self.y_hi - self.y_lo)
    }
}

/// Renders `table` (usually a median table) as SVG text.
pub fn render_svg(table: &TraceTable, x: Axis) -> Result<String> {
    if table.is_empty() {
        return Err(BenchError::config("nothing to plot: the table is empty"));
    }
    if x == Axis::Time && !table.has_time() {
        return Err(BenchError::config(
            "a time axis needs elapsed_s in every row",
        ));
    }
    let x_of = |r: &crate::table::TraceRow| match x {
        Axis::Iteration => r.outer_iter as f64,
        Axis::Time => r.elapsed_s.unwrap_or(0.0),
    };
    let positive: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.loss_normalized)
        .filter(|&l| l > 0.0)
        .collect();
    let floor = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-300 };
    let top = positive.iter().copied().fold(floor, f64::max);
    let (mut y_lo, mut y_hi) = (floor.log10().floor(), top.log10().ceil());
    if y_hi - y_lo < 1.0 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let frame = Frame {
        x_max: table.rows.iter().map(x_of).fold(0.0, f64::max),
        y_lo,
        y_hi,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r##"<rect class="axes" x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y1 - y0
    );

    let decades = (y_hi - y_lo).ceil() as i64;
    let step = (decades / 10).max(1);
    let mut e = y_lo.ceil() as i64;
    while e as f64 <= y_hi {
        let py = frame.py(10f64.powi(e as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            x0 - 6.0,
            py + 4.0
        );
        e += step;
    }
    for i in 0..=5 {
        let value = frame.x_max * i as f64 / 5.0;
        let px = frame.px(value);
        let label = match x {
            Axis::Iteration => format!("{}", value.round() as i64),
            Axis::Time => format!("{value:.3}"),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            y1 + 18.0
        );
    }
    let x_label = match x {
        Axis::Iteration => "outer iteration",
        Axis::Time => "time (s)",
    };
    let _ = writeln!(
        svg,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="ylabel" x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">normalized loss (median)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (i, algorithm) in table.algorithms().iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = DASHES[(i / COLORS.len()) % DASHES.len()];
        let mut rows: Vec<_> = table.rows_for(algorithm).collect();
        rows.sort_by(|a, b| x_of(a).total_cmp(&x_of(b)));
        let points: Vec<String> = rows
            .iter()
            .map(|r| {
                format!(
                    "{:.2},{:.2}",
                    frame.px(x_of(r)),
                    frame.py(r.loss_normalized.max(floor))
                )
            })
            .collect();
        let name = escape(algorithm);
        let _ = writeln!(
            svg,
            r#"<polyline class="series series-{i}" data-algorithm="{name}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{}" y="{}">{name}</text></g>"#,
            lx + 28.0,
            lx + 34.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(table: &TraceTable, x: Axis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(table, x)?;
    fs::write(path, svg).map_err(|e| BenchError::io(path, e))
}
