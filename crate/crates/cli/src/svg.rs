//! Minimal hand-written SVG charts: line, overlaid histogram, scatter.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One chart body sized `W × H`.
pub struct Chart {
    body: String,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)>, y_from_zero: bool) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if y_from_zero {
            y0 = y0.min(0.0);
        }
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        Frame { x0, x1, y0: if y_from_zero && y0 == 0.0 { 0.0 } else { y0 - pad }, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn axes(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = write!(
        out,
        r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        r - l,
        b - t
    );
    let _ = write!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, (l + r) / 2.0, H - 10.0, escape(xlabel));
    let _ = write!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#, f.px(fx), b + 14.0, tick(fx));
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#, l - 4.0, f.py(fy) + 3.0, tick(fy));
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 12.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let c = PALETTE[i % PALETTE.len()];
        let _ = write!(out, r#"<rect x="{x}" y="{}" width="12" height="4" fill="{c}"/>"#, y - 4.0);
        let _ = write!(out, r#"<text x="{}" y="{y}" font-size="11">{}</text>"#, x + 18.0, escape(label));
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
        .collect();
    if coords.is_empty() {
        return;
    }
    let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Chart {
    let f = Frame::new(series.iter().flat_map(|s| s.points.iter().copied()), false);
    let mut body = String::new();
    axes(&mut body, &f, title, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        polyline(&mut body, &f, &s.points, c);
        for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(body, r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="{c}"/>"#, f.px(x), f.py(y));
        }
    }
    legend(&mut body, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    Chart { body }
}

/// Overlaid density histograms on shared bins.
pub fn histogram_overlay(title: &str, xlabel: &str, series: &[(String, Vec<f64>)], bins: usize) -> Chart {
    let all: Vec<f64> = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let steps: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, vals)| {
            let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
            let mut counts = vec![0usize; bins];
            for v in &finite {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let n = finite.len().max(1) as f64;
            let mut pts = vec![(lo, 0.0)];
            for (b, c) in counts.iter().enumerate() {
                let d = *c as f64 / (n * width);
                pts.push((lo + b as f64 * width, d));
                pts.push((lo + (b + 1) as f64 * width, d));
            }
            pts.push((hi, 0.0));
            pts
        })
        .collect();
    let f = Frame::new(steps.iter().flatten().copied(), true);
    let mut body = String::new();
    axes(&mut body, &f, title, xlabel, "density");
    for (i, pts) in steps.iter().enumerate() {
        polyline(&mut body, &f, pts, PALETTE[i % PALETTE.len()]);
    }
    legend(&mut body, &series.iter().map(|s| s.0.as_str()).collect::<Vec<_>>());
    Chart { body }
}

pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], diagonal: bool) -> Chart {
    let f = Frame::new(points.iter().copied(), false);
    let mut body = String::new();
    axes(&mut body, &f, title, xlabel, ylabel);
    if diagonal {
        let lo = f.x0.max(f.y0);
        let hi = f.x1.min(f.y1);
        if hi > lo {
            let _ = write!(
                body,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
                f.px(lo), f.py(lo), f.px(hi), f.py(hi)
            );
        }
    }
    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = write!(body, r#"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="{}" fill-opacity="0.5"/>"#, f.px(x), f.py(y), PALETTE[0]);
    }
    Chart { body }
}

/// Stack charts vertically into one document.
pub fn render(charts: &[Chart]) -> String {
    let total = H * charts.len().max(1) as f64;
    let mut out = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total}" viewBox="0 0 {W} {total}" font-family="sans-serif">
<rect width="100%" height="100%" fill="white"/>
"#
    );
    for (i, c) in charts.iter().enumerate() {
        let _ = writeln!(out, r#"<g transform="translate(0 {})">{}</g>"#, H * i as f64, c.body);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_and_well_formed() {
        let s = render(&[
            line_chart("a<b", "x", "y", &[Series { label: "r&d".into(), points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)] }]),
            histogram_overlay("h", "v", &[("raw".into(), vec![1.0, 2.0, 2.5]), ("residualized".into(), vec![])], 10),
            scatter("s", "x", "y", &[], true),
        ]);
        assert!(s.contains("a&lt;b") && s.contains("r&amp;d"));
        assert!(s.contains(">raw<") && s.contains(">residualized<"));
        assert!(!s.contains("NaN"));
        assert_eq!(s.matches("<g ").count(), s.matches("</g>").count());
        assert!(s.ends_with("</svg>\n"));
    }
}
