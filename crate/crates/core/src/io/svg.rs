//! Standalone SVG 1.1 plots. Geometry is drawn inside a `<g>` whose transform
//! maps data coordinates to the canvas, so coordinates in the markup are the
//! data values themselves.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polytope2D};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

pub const BEFORE_COLOR: &str = "#d62728";
pub const AFTER_COLOR: &str = "#1f77b4";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data window mapped onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn padded(x0: f64, x1: f64, y0: f64, y1: f64, equal_aspect: bool) -> Self {
        let widen = |lo: f64, hi: f64| {
            let span = hi - lo;
            let pad = if span > 0.0 { 0.05 * span } else { lo.abs().max(1.0) * 0.5 };
            (lo - pad, hi + pad)
        };
        let (mut x0, mut x1) = widen(x0, x1);
        let (mut y0, mut y1) = widen(y0, y1);
        if equal_aspect {
            let (pw, ph) = (WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B);
            let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            x0 = cx - scale * pw / 2.0;
            x1 = cx + scale * pw / 2.0;
            y0 = cy - scale * ph / 2.0;
            y1 = cy + scale * ph / 2.0;
        }
        Self { x0, x1, y0, y1 }
    }

    fn sx(&self) -> f64 {
        (WIDTH - MARGIN_L - MARGIN_R) / (self.x1 - self.x0)
    }

    fn sy(&self) -> f64 {
        (HEIGHT - MARGIN_T - MARGIN_B) / (self.y1 - self.y0)
    }

    /// `matrix(...)` taking data coordinates to canvas coordinates, y up.
    fn transform(&self) -> String {
        let (sx, sy) = (self.sx(), self.sy());
        format!(
            "matrix({sx} 0 0 {} {} {})",
            -sy,
            MARGIN_L - sx * self.x0,
            HEIGHT - MARGIN_B + sy * self.y0
        )
    }

    fn canvas(&self, x: f64, y: f64) -> (f64, f64) {
        (MARGIN_L + (x - self.x0) * self.sx(), HEIGHT - MARGIN_B - (y - self.y0) * self.sy())
    }

    /// Stroke width in data units giving `px` on the canvas.
    fn stroke(&self, px: f64) -> f64 {
        px / self.sx().min(self.sy())
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(title));
    let _ = writeln!(out, r#"  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (left, bottom) = (MARGIN_L, HEIGHT - MARGIN_B);
    let (right, top) = (WIDTH - MARGIN_R, MARGIN_T);
    let _ = writeln!(
        out,
        r#"  <g id="axes" stroke="black" stroke-width="1" fill="none"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/></g>"#
    );
    let _ = writeln!(out, r#"  <g font-family="sans-serif" font-size="11" fill="black">"#);
    for (i, v) in [f.x0, (f.x0 + f.x1) / 2.0, f.x1].iter().enumerate() {
        let (x, _) = f.canvas(*v, f.y0);
        let anchor = ["start", "middle", "end"][i];
        let _ = writeln!(out, r#"    <text x="{x:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#, bottom + 16.0, tick(*v));
    }
    for v in [f.y0, (f.y0 + f.y1) / 2.0, f.y1] {
        let (_, y) = f.canvas(f.x0, v);
        let _ = writeln!(out, r#"    <text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, tick(v));
    }
    let _ = writeln!(
        out,
        r#"    <text id="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"    <text id="ylabel" x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(ylabel)
    );
    let _ = writeln!(out, "  </g>");
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Loss against iteration as a single polyline.
pub fn loss_plot(trace: &[(usize, f64)]) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::Empty("loss trace"));
    }
    if trace.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite("loss trace"));
    }
    let xs = trace.iter().map(|(t, _)| *t as f64);
    let ys = trace.iter().map(|(_, v)| *v);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let f = Frame::padded(x0, x1, y0, y1, false);

    let mut out = String::new();
    header(&mut out, "Combined loss by iteration");
    axes(&mut out, &f, "iteration", "combined loss");
    let points: Vec<String> = trace.iter().map(|(t, v)| format!("{t},{v}")).collect();
    let _ = writeln!(out, r#"  <g id="data" transform="{}">"#, f.transform());
    // stroke scales with the transform; non-uniform scaling is acceptable for a thin line
    let _ = writeln!(
        out,
        r#"    <polyline id="loss" fill="none" stroke="{AFTER_COLOR}" stroke-width="{}" points="{}"/>"#,
        f.stroke(1.5),
        points.join(" ")
    );
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    Ok(out)
}

fn polygon_points(p: &Polytope2D) -> String {
    p.vertices().iter().map(|v| format!("{},{}", v.x, v.y)).collect::<Vec<_>>().join(" ")
}

/// Two polygons, before and after, with a legend.
pub fn zonotope_plot(before: &Polytope2D, after: &Polytope2D, dims: (usize, usize), title: &str) -> Result<String> {
    let all: Vec<Point2> = before.vertices().iter().chain(after.vertices()).copied().collect();
    if all.is_empty() {
        return Err(Error::Empty("polygon"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &all {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::NonFinite("polygon"));
        }
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let f = Frame::padded(x0, x1, y0, y1, true);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, &format!("dimension {}", dims.0), &format!("dimension {}", dims.1));
    let sw = f.stroke(2.0);
    let _ = writeln!(out, r#"  <g id="data" transform="{}">"#, f.transform());
    let _ = writeln!(
        out,
        r#"    <polygon id="before" fill="{BEFORE_COLOR}" fill-opacity="0.15" stroke="{BEFORE_COLOR}" stroke-width="{sw}" points="{}"/>"#,
        polygon_points(before)
    );
    let _ = writeln!(
        out,
        r#"    <polygon id="after" fill="{AFTER_COLOR}" fill-opacity="0.15" stroke="{AFTER_COLOR}" stroke-width="{sw}" stroke-dasharray="{} {}" points="{}"/>"#,
        3.0 * sw,
        2.0 * sw,
        polygon_points(after)
    );
    let _ = writeln!(out, "  </g>");
    let lx = WIDTH - MARGIN_R - 150.0;
    let _ = writeln!(out, r#"  <g id="legend" font-family="sans-serif" font-size="12">"#);
    for (i, (label, color)) in [("before", BEFORE_COLOR), ("after", AFTER_COLOR)].iter().enumerate() {
        let y = MARGIN_T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"    <rect x="{lx}" y="{}" width="14" height="10" fill="{color}" fill-opacity="0.3" stroke="{color}"/><text x="{}" y="{}">{label}</text>"#,
            y - 9.0,
            lx + 20.0,
            y
        );
    }
    let _ = writeln!(out, "  </g>");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    super::write_atomic(path, svg.as_bytes())
}
