//! A small SVG line-plot writer: polylines, filled regions and text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

enum Item {
    Line { points: Vec<(f64, f64)>, color: String, label: String, dashed: bool },
    Fill { points: Vec<(f64, f64)>, color: String },
    Markers { points: Vec<(f64, f64)>, color: String, label: String },
}

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    scale: Scale,
    items: Vec<Item>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, scale: Scale) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            scale,
            items: Vec::new(),
        }
    }

    pub fn line(&mut self, points: Vec<(f64, f64)>, color: &str, label: &str) -> &mut Self {
        self.items.push(Item::Line { points, color: color.into(), label: label.into(), dashed: false });
        self
    }

    pub fn dashed(&mut self, points: Vec<(f64, f64)>, color: &str, label: &str) -> &mut Self {
        self.items.push(Item::Line { points, color: color.into(), label: label.into(), dashed: true });
        self
    }

    /// Closed polygon, drawn under the lines.
    pub fn fill(&mut self, points: Vec<(f64, f64)>, color: &str) -> &mut Self {
        self.items.push(Item::Fill { points, color: color.into() });
        self
    }

    pub fn markers(&mut self, points: Vec<(f64, f64)>, color: &str, label: &str) -> &mut Self {
        self.items.push(Item::Markers { points, color: color.into(), label: label.into() });
        self
    }

    fn transform(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        }
    }

    pub fn render(&self) -> String {
        let all = self.items.iter().flat_map(|i| match i {
            Item::Line { points, .. } | Item::Fill { points, .. } | Item::Markers { points, .. } => {
                points.iter()
            }
        });
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in all {
            let (x, y) = (self.transform(x), self.transform(y));
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if self.scale == Scale::Linear {
            y0 = y0.min(0.0);
        }
        if x1 - x0 < 1e-300 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-300 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - if self.scale == Scale::Log { pad } else { 0.0 }, y1 + pad);
        let px = |x: f64| MARGIN + (self.transform(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (self.transform(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let path = |pts: &[(f64, f64)]| -> String {
            pts.iter()
                .filter(|(x, y)| self.transform(*x).is_finite() && self.transform(*y).is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            s,
            r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (xt, yt) = match self.scale {
                Scale::Linear => (format!("{xv:.3}"), format!("{yv:.3}")),
                Scale::Log => (format!("{:.3e}", 10f64.powf(xv)), format!("{:.2e}", 10f64.powf(yv))),
            };
            let gx = left + f * (right - left);
            let gy = bottom - f * (bottom - top);
            let _ = writeln!(s, r#"<text x="{gx:.2}" y="{}" text-anchor="middle">{xt}</text>"#, bottom + 16.0);
            let _ = writeln!(s, r#"<text x="{}" y="{gy:.2}" text-anchor="end">{yt}</text>"#, left - 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for item in &self.items {
            if let Item::Fill { points, color } = item {
                let _ = writeln!(
                    s,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.35" stroke="none"/>"#,
                    path(points)
                );
            }
        }
        let mut legend = 0;
        for item in &self.items {
            let (color, label) = match item {
                Item::Line { points, color, label, dashed } => {
                    let dash = if *dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                        path(points)
                    );
                    (color, label)
                }
                Item::Markers { points, color, label } => {
                    for &(x, y) in points {
                        if self.transform(x).is_finite() && self.transform(y).is_finite() {
                            let _ = writeln!(
                                s,
                                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                                px(x),
                                py(y)
                            );
                        }
                    }
                    (color, label)
                }
                Item::Fill { .. } => continue,
            };
            if label.is_empty() {
                continue;
            }
            let ly = top + 14.0 + 16.0 * legend as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                right - 150.0,
                right - 130.0,
                right - 124.0,
                ly + 4.0,
                escape(label)
            );
            legend += 1;
        }
        s.push_str("</svg>\n");
        s
    }
}
