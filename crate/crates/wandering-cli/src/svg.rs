//! Minimal SVG writer for line plots, boxes and heatmaps.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 56.0;

/// A plot whose data rectangle maps onto the drawing area.
pub struct Plot {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    title: String,
    labels: (String, String),
}

fn widen(r: (f64, f64)) -> (f64, f64) {
    if r.1 > r.0 {
        r
    } else {
        let d = if r.0 == 0.0 { 1.0 } else { r.0.abs() * 0.1 };
        (r.0 - d, r.0 + d)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: &str, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) -> Self {
        Plot { x: widen(x), y: widen(y), body: String::new(), title: title.into(), labels: (xlabel.into(), ylabel.into()) }
    }

    /// Extent covering every finite point.
    pub fn extent(points: impl IntoIterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in points {
            if a.is_finite() && b.is_finite() {
                x = (x.0.min(a), x.1.max(a));
                y = (y.0.min(b), y.1.max(b));
            }
        }
        if !x.0.is_finite() {
            return ((0.0, 1.0), (0.0, 1.0));
        }
        (x, y)
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let path: Vec<String> = pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        if path.len() > 1 {
            let _ = writeln!(self.body, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
    }

    pub fn points(&mut self, pts: &[(f64, f64)], color: &str, r: f64) {
        for &(x, y) in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#, self.px(x), self.py(y));
        }
    }

    /// Axis-aligned rectangle in data coordinates.
    pub fn rect(&mut self, x: (f64, f64), y: (f64, f64), stroke: &str, fill: &str) {
        let (x0, x1) = (self.px(x.0), self.px(x.1));
        let (y0, y1) = (self.py(y.1), self.py(y.0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" stroke="{stroke}" fill="{fill}" fill-opacity="0.3"/>"#,
            (x1 - x0).max(0.5),
            (y1 - y0).max(0.5)
        );
    }

    /// Row-major `ny × nx` cells spanning the full data rectangle; `None` draws black.
    pub fn heatmap(&mut self, nx: usize, ny: usize, values: &[Option<f64>], vmax: f64) {
        let cw = (W - 2.0 * PAD) / nx as f64;
        let ch = (H - 2.0 * PAD) / ny as f64;
        for iy in 0..ny {
            for ix in 0..nx {
                let color = match values[iy * nx + ix] {
                    None => "#000000".to_string(),
                    Some(v) => {
                        let t = (v.ln_1p() / vmax.ln_1p().max(1e-12)).clamp(0.0, 1.0);
                        let c = (255.0 * t) as u8;
                        format!("#{:02x}{:02x}{:02x}", 255 - c / 2, 255 - c, 255)
                    }
                };
                let _ = writeln!(
                    self.body,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    PAD + ix as f64 * cw,
                    H - PAD - (iy + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
            self.x.0, self.x.1, self.y.0, self.y.1
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        s.push_str(&self.body);
        let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * PAD, H - 2.0 * PAD);
        let font = r#"font-family="sans-serif" font-size="11""#;
        let _ = writeln!(s, r#"<text x="{PAD}" y="{}" {font}>{}</text>"#, H - PAD + 14.0, fmt_tick(self.x.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, W - PAD, H - PAD + 14.0, fmt_tick(self.x.1));
        let _ = writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, fmt_tick(self.y.0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="end">{}</text>"#, PAD - 4.0, PAD + 10.0, fmt_tick(self.y.1));
        let _ = writeln!(s, r#"<text x="{}" y="{}" {font} text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(&self.labels.0));
        let _ = writeln!(s, r#"<text x="14" y="{}" {font} text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#, H / 2.0, H / 2.0, esc(&self.labels.1));
        let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(&self.title));
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extents_are_recorded() {
        let p = Plot::new("t", (-1.2, 1.2), (-0.5, 2.0), "x", "y");
        let s = p.render();
        assert!(s.contains(r#"data-x-min="-1.2" data-x-max="1.2" data-y-min="-0.5" data-y-max="2""#));
    }

    #[test]
    fn degenerate_extent_is_widened() {
        let p = Plot::new("t", (1.0, 1.0), (0.0, 0.0), "x", "y");
        assert!(p.x.1 > p.x.0 && p.y.1 > p.y.0);
    }
}
