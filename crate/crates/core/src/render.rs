//! Deterministic SVG figures: level curves (one colour per level), dashed
//! cross-sections, masked cells and, optionally, the image of a chart grid.

use std::fmt::Write as _;

use crate::field::ScalarField;
use crate::geom::Point;
use crate::regularity::{build_cross_section, FlowParams};
use crate::straighten::{chart_apply, GlobalChart};
use crate::trace::trace_level;

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub levels: Vec<f64>,
    /// Seeds of the dashed cross-sections.
    pub sections: Vec<Point>,
    pub width: f64,
    pub trace_tol: f64,
    pub flow: FlowParams,
    /// Chart grid lines per axis.
    pub grid_lines: usize,
}

impl RenderOptions {
    /// `levels` evenly spread over the sampled range and five section
    /// seeds along the horizontal midline.
    pub fn for_field(field: &ScalarField, levels: usize, trace_tol: f64) -> Self {
        let w = field.window();
        let (lo, hi) = field.sampled_range().unwrap_or((0.0, 1.0));
        let levels = (0..levels)
            .map(|k| lo + (k as f64 + 0.5) * (hi - lo) / levels as f64)
            .collect();
        let mid = 0.5 * (w.ymin + w.ymax);
        let sections = (0..5)
            .map(|i| Point::new(w.xmin + (i as f64 + 0.5) / 5.0 * (w.xmax - w.xmin), mid))
            .collect();
        RenderOptions {
            levels,
            sections,
            width: 800.0,
            trace_tol,
            flow: FlowParams::for_field(field, trace_tol),
            grid_lines: 16,
        }
    }
}

/// Hue ramp from blue (lowest level) to red (highest).
fn level_colour(k: usize, n: usize) -> String {
    let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.5 };
    let hue = 240.0 * (1.0 - t);
    let (r, g, b) = hsl_to_rgb(hue, 0.75, 0.45);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (byte(r), byte(g), byte(b))
}

struct Canvas {
    xmin: f64,
    ymax: f64,
    scale: f64,
    out: String,
}

impl Canvas {
    fn map(&self, p: Point) -> (f64, f64) {
        ((p.x - self.xmin) * self.scale, (self.ymax - p.y) * self.scale)
    }

    fn polyline(&mut self, pts: &[Point], style: &str) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (k, &p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(d, "{}{x:.3},{y:.3}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(self.out, r#"<path d="{d}" {style}/>"#);
    }
}

pub fn render_svg(field: &ScalarField, chart: Option<&GlobalChart>, options: &RenderOptions) -> String {
    let w = *field.window();
    let scale = options.width / (w.xmax - w.xmin);
    let height = (w.ymax - w.ymin) * scale;
    let mut c = Canvas {
        xmin: w.xmin,
        ymax: w.ymax,
        scale,
        out: String::new(),
    };
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.3}" height="{height:.3}" viewBox="0 0 {:.3} {height:.3}">"#,
        options.width, options.width
    );
    let _ = writeln!(c.out, "<title>{}</title>", escape(field.source()));
    let _ = writeln!(
        c.out,
        r##"<rect x="0" y="0" width="{:.3}" height="{height:.3}" fill="#ffffff"/>"##,
        options.width
    );

    let _ = writeln!(c.out, r#"<g id="masked">"#);
    for j in 0..w.ny - 1 {
        for i in 0..w.nx - 1 {
            if field.is_cell_masked(i, j) {
                let (x, y) = c.map(Point::new(w.node_x(i), w.node_y(j + 1)));
                let (cw, ch) = (w.dx() * scale, w.dy() * scale);
                let _ = writeln!(
                    c.out,
                    r##"<rect x="{x:.3}" y="{y:.3}" width="{cw:.3}" height="{ch:.3}" fill="#dddddd"/>"##
                );
            }
        }
    }
    let _ = writeln!(c.out, "</g>");

    let _ = writeln!(c.out, r#"<g id="levels" fill="none" stroke-width="1.2">"#);
    let n = options.levels.len();
    for (k, &level) in options.levels.iter().enumerate() {
        let colour = level_colour(k, n);
        if let Ok(components) = trace_level(field, level, options.trace_tol) {
            for comp in components {
                c.polyline(&comp.vertices, &format!(r#"stroke="{colour}""#));
            }
        }
    }
    let _ = writeln!(c.out, "</g>");

    let _ = writeln!(
        c.out,
        r##"<g id="sections" fill="none" stroke="#222222" stroke-width="1" stroke-dasharray="6 4">"##
    );
    for &seed in &options.sections {
        if let Ok(s) = build_cross_section(
            field,
            seed,
            (f64::NEG_INFINITY, f64::INFINITY),
            options.flow,
        ) {
            c.polyline(&s.vertices, "");
        }
    }
    let _ = writeln!(c.out, "</g>");

    if let Some(chart) = chart {
        let _ = writeln!(
            c.out,
            r##"<g id="chart" fill="none" stroke="#555555" stroke-width="0.6">"##
        );
        let (lo, hi) = chart.y_range();
        let steps = 64;
        for level in chart.levels() {
            let Some((a, b)) = chart.domain_at(level) else { continue };
            let pts: Vec<Point> = (0..=steps)
                .filter_map(|i| chart_apply(chart, a + (b - a) * i as f64 / steps as f64, level).ok())
                .collect();
            c.polyline(&pts, "");
        }
        // Vertical grid lines x = const, broken where strips leave the domain.
        let (xa, xb) = chart
            .strips
            .iter()
            .enumerate()
            .map(|(k, _)| chart.strip_domain(k))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, d| (acc.0.min(d.0), acc.1.max(d.1)));
        let lines = options.grid_lines.max(2);
        for i in 0..lines {
            let x = xa + (xb - xa) * i as f64 / (lines - 1) as f64;
            let mut run = Vec::new();
            for j in 0..=steps * chart.strips.len() {
                let y = lo + (hi - lo) * j as f64 / (steps * chart.strips.len()) as f64;
                match chart_apply(chart, x, y) {
                    Ok(p) => run.push(p),
                    Err(_) => {
                        c.polyline(&run, "");
                        run.clear();
                    }
                }
            }
            c.polyline(&run, "");
        }
        let _ = writeln!(c.out, "</g>");
    }

    let _ = writeln!(c.out, "</svg>");
    c.out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
