//! Minimal SVG line charts: polylines, segment fans and horizontal reference
//! lines in side-by-side panels.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    pub fans: Vec<Fan>,
    pub reference: Vec<(f64, String)>,
}

#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

/// Unconnected segments drawn as one path (e.g. the edges of a scenario tree).
#[derive(Debug, Clone)]
pub struct Fan {
    pub label: String,
    pub color: String,
    pub segments: Vec<[(f64, f64); 2]>,
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const ML: f64 = 64.0;
const MR: f64 = 16.0;
const MT: f64 = 32.0;
const MB: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    ox: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.ox + ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }
    fn py(&self, y: f64) -> f64 {
        MT + (self.y1 - y) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut take = |(x, y): (f64, f64)| {
        if x.is_finite() && y.is_finite() {
            b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        }
    };
    for l in &panel.lines {
        l.points.iter().copied().for_each(&mut take);
    }
    for f in &panel.fans {
        f.segments.iter().flatten().copied().for_each(&mut take);
    }
    for (y, _) in &panel.reference {
        if b.0.is_finite() && y.is_finite() {
            b.2 = b.2.min(*y);
            b.3 = b.3.max(*y);
        }
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 == b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 == b.2 {
        b.3 = b.2 + 1.0;
    }
    let pad = 0.04 * (b.3 - b.2);
    (b.0, b.1, b.2 - pad, b.3 + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64) {
    let (x0, x1, y0, y1) = bounds(panel);
    let fr = Frame { x0, x1, y0, y1, ox };
    let (left, right, top, bottom) = (ox + ML, ox + W - MR, MT, H - MB);
    let _ = writeln!(
        out,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        right - left,
        bottom - top
    );
    for t in ticks(x0, x1) {
        let x = fr.px(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="#444"/>"##, bottom + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, bottom + 16.0, label(t));
    }
    for t in ticks(y0, y1) {
        let y = fr.py(t);
        let _ = writeln!(out, r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#444"/>"##, left - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, label(t));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="20" text-anchor="middle" font-weight="bold">{}</text>"#, (left + right) / 2.0, esc(&panel.title));
    let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, H - 10.0, esc(&panel.x_label));
    let _ = writeln!(
        out,
        r#"<text transform="translate({},{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        ox + 16.0,
        (top + bottom) / 2.0,
        esc(&panel.y_label)
    );

    for f in &panel.fans {
        let mut d = String::new();
        for [a, b] in &f.segments {
            if a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite() {
                let _ = write!(d, "M{:.1} {:.1}L{:.1} {:.1}", fr.px(a.0), fr.py(a.1), fr.px(b.0), fr.py(b.1));
            }
        }
        let _ = writeln!(out, r#"<path d="{d}" stroke="{}" stroke-width="0.6" stroke-opacity="0.5" fill="none"/>"#, f.color);
    }
    for l in &panel.lines {
        let pts: Vec<String> = l
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", fr.px(x), fr.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#, pts.join(" "), l.color);
    }
    for (y, name) in &panel.reference {
        let py = fr.py(*y);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{py:.2}" x2="{right}" y2="{py:.2}" stroke="#000" stroke-dasharray="6 4"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, right - 4.0, py - 4.0, esc(name));
    }
    let legend: Vec<(&str, &str)> = panel
        .lines
        .iter()
        .map(|l| (l.label.as_str(), l.color.as_str()))
        .chain(panel.fans.iter().map(|f| (f.label.as_str(), f.color.as_str())))
        .collect();
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = top + 14.0 + 14.0 * i as f64;
        let _ = writeln!(out, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, right - 70.0, right - 54.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, right - 50.0, y + 4.0, esc(name));
    }
}

/// Renders panels left to right.
pub fn render(panels: &[Panel]) -> String {
    let width = W * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{H}" viewBox="0 0 {width} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, W * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = ticks(9.7, 9.9);
        assert!(t.len() >= 2 && t[0] >= 9.7 && *t.last().unwrap() <= 9.9 + 1e-12);
    }

    #[test]
    fn renders_well_formed_document() {
        let p = Panel {
            title: "a < b".into(),
            lines: vec![Line { label: "N=3".into(), color: PALETTE[0].into(), points: vec![(1.0, 2.0), (2.0, f64::NAN), (3.0, 1.0)] }],
            reference: vec![(1.5, "ref".into())],
            ..Panel::default()
        };
        let s = render(&[p.clone(), p]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        assert!(!s.contains("NaN"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
