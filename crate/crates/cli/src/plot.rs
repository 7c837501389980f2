//! Minimal deterministic SVG line and polar plots.

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("series `{0}` needs at least two points")]
    TooShort(String),
    #[error("series `{0}` has x and y of different lengths")]
    Mismatch(String),
    #[error("series `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("nothing to plot")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series { name: name.into(), x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Lines,
    /// `x` is an angle, `y` a positive radius; curves are closed.
    Polar,
}

#[derive(Debug, Clone)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub annotation: Option<String>,
}

impl PlotStyle {
    pub fn lines(title: &str, x_label: &str, y_label: &str) -> Self {
        PlotStyle {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            kind: PlotKind::Lines,
            annotation: None,
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_plot(series: &[Series], style: &PlotStyle) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::Empty);
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(PlotError::Mismatch(s.name.clone()));
        }
        if s.x.len() < 2 {
            return Err(PlotError::TooShort(s.name.clone()));
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(PlotError::NonFinite(s.name.clone()));
        }
    }
    // cartesian points for both kinds
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| match style.kind {
            PlotKind::Lines => s.x.iter().copied().zip(s.y.iter().copied()).collect(),
            PlotKind::Polar => s.x.iter().zip(&s.y).map(|(t, r)| (r * t.cos(), r * t.sin())).collect(),
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
    if style.kind == PlotKind::Polar {
        let m = x0.abs().max(x1.abs()).max(y0.abs()).max(y1.abs());
        (x0, x1, y0, y1) = (-m, m, -m, m);
    }
    if x1 - x0 < 1e-300 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-300 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(&style.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (v, lbl) in [(x0, x0), (x1, x1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.4}</text>"#,
            sx(v),
            H - PAD + 16.0,
            lbl
        );
    }
    for (v, lbl) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.4}</text>"#,
            PAD - 6.0,
            sy(v) + 4.0,
            lbl
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 18.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(&style.y_label)
    );
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let tag = if style.kind == PlotKind::Polar { "polygon" } else { "polyline" };
        let _ = writeln!(
            svg,
            r#"<{tag} fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></{tag}>"#,
            coords.join(" "),
            escape(&s.name)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            W - PAD - 4.0,
            PAD + 16.0 * (k + 1) as f64,
            escape(&s.name)
        );
    }
    if let Some(a) = &style.annotation {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, PAD + 8.0, H - PAD - 8.0, escape(a));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_one_polyline() {
        let s = Series::new("a", vec![0.0, 1.0], vec![0.0, 2.0]);
        let svg = emit_plot(&[s], &PlotStyle::lines("t", "x", "y")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn deterministic_bytes() {
        let s = vec![Series::new("a", vec![0.0, 1.0, 2.0], vec![3.0, 1.0, 2.0])];
        let style = PlotStyle::lines("t", "x", "y");
        assert_eq!(emit_plot(&s, &style).unwrap(), emit_plot(&s, &style).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let style = PlotStyle::lines("t", "x", "y");
        assert_eq!(emit_plot(&[], &style), Err(PlotError::Empty));
        let one = Series::new("a", vec![0.0], vec![0.0]);
        assert!(matches!(emit_plot(&[one], &style), Err(PlotError::TooShort(_))));
        let bad = Series::new("a", vec![0.0, 1.0], vec![0.0]);
        assert!(matches!(emit_plot(&[bad], &style), Err(PlotError::Mismatch(_))));
    }

    #[test]
    fn polar_is_closed() {
        let th: Vec<f64> = (0..16).map(|j| std::f64::consts::TAU * j as f64 / 16.0).collect();
        let s = Series::new("alpha", th, vec![1.0; 16]);
        let style = PlotStyle {
            kind: PlotKind::Polar,
            ..PlotStyle::lines("alpha", "", "")
        };
        let svg = emit_plot(&[s], &style).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 1);
    }
}
