//! SVG figures: error against evaluation time per method, and input /
//! reference / prediction panels for single samples.

use super::results::ResultRow;
use crate::error::{invalid, Result};
use crate::grid::GridFunction;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `[lo, hi]` padded by 5%, never degenerate.
fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn axes(s: &mut String, title: &str, xlabel: &str, ylabel: &str, xr: (f64, f64), yr: (f64, f64)) {
    let _ = write!(
        s,
        r##"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="#000"/>"##,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = write!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, esc(title));
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, H - 15.0, esc(xlabel));
    let _ = write!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = M + f * (W - 2.0 * M);
        let y = H - M - f * (H - 2.0 * M);
        let _ = write!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{:.3e}</text>"#, H - M + 14.0, xr.0 + f * (xr.1 - xr.0));
        let _ = write!(s, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" font-size="10">{:.3e}</text>"#, M - 4.0, yr.0 + f * (yr.1 - yr.0));
    }
}

fn to_px(v: f64, r: (f64, f64), lo: f64, span: f64) -> f64 {
    lo + (v - r.0) / (r.1 - r.0) * span
}

fn open() -> String {
    format!(r#"<?xml version="1.0" encoding="UTF-8"?><svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#)
}

/// One labelled point per method at (test time, L² error).
pub fn scatter_svg(rows: &[ResultRow]) -> String {
    let mut s = open();
    let xr = range(rows.iter().map(|r| r.test_time));
    let yr = range(rows.iter().map(|r| r.l2_error));
    axes(&mut s, "Error against evaluation time", "evaluation time (s)", "L2 error", xr, yr);
    for (i, r) in rows.iter().enumerate() {
        let x = to_px(r.test_time, xr, M, W - 2.0 * M);
        let y = to_px(r.l2_error, yr, H - M, -(H - 2.0 * M));
        let c = COLORS[i % COLORS.len()];
        let _ = write!(s, r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="5" fill="{c}"/>"#);
        let _ = write!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, x + 7.0, y - 7.0, esc(&r.method));
    }
    s.push_str("</svg>\n");
    s
}

/// Input, reference and prediction for one sample: overlaid curves in 1-d,
/// three heat maps in 2-d.
pub fn sample_svg(title: &str, input: &GridFunction, reference: &GridFunction, output: &GridFunction) -> Result<String> {
    if !input.same_grid(reference) || !input.same_grid(output) {
        return invalid("sample plot needs three functions on one grid");
    }
    match input.dims() {
        1 => Ok(lines_1d(title, &[("input", input), ("reference", reference), ("prediction", output)])),
        2 => Ok(heat_2d(title, &[("input", input), ("reference", reference), ("prediction", output)])),
        d => invalid(format!("cannot plot {d}-d samples")),
    }
}

fn lines_1d(title: &str, curves: &[(&str, &GridFunction)]) -> String {
    let mut s = open();
    let n = curves[0].1.len();
    let len = curves[0].1.lengths[0];
    let xr = (0.0, len);
    let yr = range(curves.iter().flat_map(|(_, g)| g.data().iter().copied()));
    axes(&mut s, title, "x", "value", xr, yr);
    for (i, (label, g)) in curves.iter().enumerate() {
        let pts: Vec<String> = (0..n)
            .map(|k| {
                let x = to_px(k as f64 * len / n as f64, xr, M, W - 2.0 * M);
                let y = to_px(g.data()[k], yr, H - M, -(H - 2.0 * M));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let c = COLORS[i % COLORS.len()];
        let _ = write!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = M + 14.0 + 14.0 * i as f64;
        let _ = write!(s, r#"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{c}">{}</text>"#, W - M - 80.0, esc(label));
    }
    s.push_str("</svg>\n");
    s
}

fn heat_2d(title: &str, panels: &[(&str, &GridFunction)]) -> String {
    let (a, b) = (panels[0].1.extents()[0], panels[0].1.extents()[1]);
    let vr = range(panels.iter().flat_map(|(_, g)| g.data().iter().copied()));
    let mut s = open();
    let _ = write!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, esc(title));
    let side = ((W - 4.0 * 20.0) / 3.0).min(H - 80.0);
    for (p, (label, g)) in panels.iter().enumerate() {
        let x0 = 20.0 + p as f64 * (side + 20.0);
        let y0 = 50.0;
        let (cw, ch) = (side / a as f64, side / b as f64);
        let _ = write!(s, r#"<g><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#, x0 + side / 2.0, y0 + side + 16.0, esc(label));
        for i in 0..a {
            for j in 0..b {
                let v = g.data()[i * b + j];
                let t = ((v - vr.0) / (vr.1 - vr.0)).clamp(0.0, 1.0);
                let (r, gg, bb) = ((255.0 * t) as u8, (255.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8, (255.0 * (1.0 - t)) as u8);
                let _ = write!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{gg},{bb})"/>"#,
                    x0 + i as f64 * cw,
                    y0 + side - (j + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
        s.push_str("</g>");
    }
    s.push_str("</svg>\n");
    s
}
