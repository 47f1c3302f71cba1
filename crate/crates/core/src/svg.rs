//! Flat SVG drawings of patterns: one labeled group per panel on a grid, one
//! quadratic path per edge, and a shared stroke color per stitched pair.

use std::fmt::Write;
use std::path::Path;

use crate::error::IoError;
use crate::pattern::Pattern;

const MARGIN: f64 = 10.0;
const FREE_EDGE: &str = "#202020";
const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#9a6324", "#800000",
    "#469990", "#808000", "#000075",
];

pub fn stitch_color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

pub fn render_svg_string(pattern: &Pattern) -> String {
    let n = pattern.panels.len().max(1);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);

    // Bounding boxes over vertices and control points.
    let boxes: Vec<[f64; 4]> = pattern
        .panels
        .iter()
        .map(|p| {
            let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for e in &p.edges {
                for q in [e.start, e.control] {
                    b[0] = b[0].min(q[0]);
                    b[1] = b[1].min(q[1]);
                    b[2] = b[2].max(q[0]);
                    b[3] = b[3].max(q[1]);
                }
            }
            if p.edges.is_empty() {
                b = [0.0; 4];
            }
            b
        })
        .collect();
    let cell_w = boxes.iter().map(|b| b[2] - b[0]).fold(0.0, f64::max) + 2.0 * MARGIN;
    let cell_h = boxes.iter().map(|b| b[3] - b[1]).fold(0.0, f64::max) + 3.0 * MARGIN;

    let mut color = vec![Vec::new(); pattern.panels.len()];
    for (pi, p) in pattern.panels.iter().enumerate() {
        color[pi] = vec![FREE_EDGE; p.edges.len()];
    }
    for (si, s) in pattern.stitches.iter().enumerate() {
        for r in [s.a, s.b] {
            if let Some(c) = color.get_mut(r.0).and_then(|p| p.get_mut(r.1)) {
                *c = stitch_color(si);
            }
        }
    }

    let mut out = String::new();
    let (w, h) = (cols as f64 * cell_w, rows as f64 * cell_h);
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt(w),
        fmt(h),
        fmt(w),
        fmt(h)
    )
    .unwrap();
    if let Some(caption) = &pattern.caption {
        writeln!(out, "  <title>{}</title>", escape(caption)).unwrap();
    }
    for (pi, panel) in pattern.panels.iter().enumerate() {
        let b = boxes[pi];
        let (col, row) = (pi % cols, pi / cols);
        // Panel-local (x, y) to canvas, y up.
        let ox = col as f64 * cell_w + MARGIN - b[0];
        let oy = row as f64 * cell_h + 2.0 * MARGIN + b[3];
        let map = |p: [f64; 2]| format!("{} {}", fmt(ox + p[0]), fmt(oy - p[1]));

        writeln!(out, r#"  <g id="panel-{pi}" class="panel">"#).unwrap();
        writeln!(
            out,
            r#"    <text x="{}" y="{}" font-size="6" font-family="sans-serif">panel {pi}</text>"#,
            fmt(col as f64 * cell_w + MARGIN),
            fmt(row as f64 * cell_h + 1.2 * MARGIN)
        )
        .unwrap();
        for (ei, e) in panel.edges.iter().enumerate() {
            writeln!(
                out,
                r#"    <path id="edge-{pi}-{ei}" d="M {} Q {} {}" fill="none" stroke="{}" stroke-width="0.8"/>"#,
                map(e.start),
                map(e.control),
                map(panel.edge_end(ei)),
                color[pi][ei]
            )
            .unwrap();
        }
        writeln!(out, "  </g>").unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    out
}

pub fn render_svg(pattern: &Pattern, out: &Path) -> Result<(), IoError> {
    std::fs::write(out, render_svg_string(pattern)).map_err(|e| IoError::io(out, e))
}

/// Fixed two-decimal formatting keeps output bytes stable.
fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
