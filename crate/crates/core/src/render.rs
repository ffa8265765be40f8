//! Minimal SVG output for layouts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::ParetoPoint;
use crate::graph::Graph;
use crate::layout::Layout;

/// Extents below this are widened so the viewBox stays positive.
const MIN_EXTENT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvgStyle {
    /// Output width and height in pixels.
    pub size: f64,
    /// Node radius and stroke width as fractions of the drawing extent.
    pub node_radius: f64,
    pub stroke_width: f64,
    pub node_fill: String,
    pub edge_stroke: String,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            size: 600.0,
            node_radius: 0.012,
            stroke_width: 0.004,
            node_fill: "#1f77b4".into(),
            edge_stroke: "#555555".into(),
        }
    }
}

/// One `<line>` per graph edge and one `<circle>` per node, in a viewBox
/// that fits the layout with a 5% margin.
pub fn render_svg(g: &Graph, x: &Layout, style: &SvgStyle) -> String {
    let pos = x.positions();
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for row in pos.rows() {
        min_x = min_x.min(row[0]);
        max_x = max_x.max(row[0]);
        min_y = min_y.min(row[1]);
        max_y = max_y.max(row[1]);
    }
    if pos.nrows() == 0 {
        (min_x, min_y, max_x, max_y) = (0.0, 0.0, 0.0, 0.0);
    }
    let mut w = max_x - min_x;
    let mut h = max_y - min_y;
    if w.max(h) < MIN_EXTENT * 1e-9 {
        min_x -= MIN_EXTENT / 2.0;
        min_y -= MIN_EXTENT / 2.0;
        w = MIN_EXTENT;
        h = MIN_EXTENT;
    }
    let extent = w.max(h);
    let margin = 0.05 * extent;
    let (vx, vy, vw, vh) = (min_x - margin, min_y - margin, w + 2.0 * margin, h + 2.0 * margin);
    let r = style.node_radius * extent;
    let sw = style.stroke_width * extent;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="{vx} {vy} {vw} {vh}">"#,
        s = style.size
    )
    .unwrap();
    writeln!(out, r#"<g stroke="{}" stroke-width="{sw}">"#, escape(&style.edge_stroke)).unwrap();
    for &(u, v) in g.edges() {
        let (a, b) = (x.point(u), x.point(v));
        writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, a[0], a[1], b[0], b[1]).unwrap();
    }
    out.push_str("</g>\n");
    writeln!(out, r#"<g fill="{}">"#, escape(&style.node_fill)).unwrap();
    for (v, label) in g.labels().iter().enumerate() {
        let p = x.point(v);
        writeln!(out, r#"<circle cx="{}" cy="{}" r="{r}"><title>{}</title></circle>"#, p[0], p[1], escape(label)).unwrap();
    }
    out.push_str("</g>\n</svg>\n");
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Scatter of `(mean_loss_a, mean_loss_b)` with one polyline per strategy,
/// in point order. Axes are labelled with the criterion names.
pub fn pareto_svg(points: &[ParetoPoint], name_a: &str, name_b: &str) -> String {
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let span = |f: fn(&ParetoPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (ax, bx) = span(|p| p.mean_loss_a);
    let (ay, by) = span(|p| p.mean_loss_b);
    let sx = |v: f64| pad + (v - ax) / (bx - ax) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - ay) / (by - ay) * (h - 2.0 * pad);

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<path d="M{pad} {pad} V{y} H{x}" fill="none" stroke="black"/>"#,
        y = h - pad,
        x = w - pad
    )
    .unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(name_a)).unwrap();
    writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(name_b)
    )
    .unwrap();
    let mut names: Vec<&str> = Vec::new();
    for p in points {
        if !names.contains(&p.strategy.as_str()) {
            names.push(&p.strategy);
        }
    }
    for (k, name) in names.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let series: Vec<&ParetoPoint> = points.iter().filter(|p| p.strategy == *name).collect();
        let coords: Vec<String> =
            series.iter().map(|p| format!("{},{}", sx(p.mean_loss_a), sy(p.mean_loss_b))).collect();
        writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, coords.join(" ")).unwrap();
        for p in &series {
            writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="4" fill="{color}"><title>{} gamma=({}, {})</title></circle>"#,
                sx(p.mean_loss_a),
                sy(p.mean_loss_b),
                escape(name),
                p.gamma_a,
                p.gamma_b
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad - 100.0,
            pad + 18.0 * k as f64,
            escape(name)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
