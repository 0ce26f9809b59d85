//! Minimal self-contained SVG charts: axes, polylines and markers.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub color: String,
    pub dashed: bool,
    pub width: f64,
    /// Draw markers instead of a line.
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<[f64; 2]>, color: &str) -> Self {
        Self {
            label: label.into(),
            points,
            color: color.into(),
            dashed: false,
            width: 1.5,
            markers: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn markers(mut self) -> Self {
        self.markers = true;
        self
    }

    pub fn width(mut self, w: f64) -> Self {
        self.width = w;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed ranges; computed from finite data when absent.
    pub x_range: Option<[f64; 2]>,
    pub y_range: Option<[f64; 2]>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    fn ranges(&self) -> ([f64; 2], [f64; 2]) {
        let mut xr = [f64::INFINITY, f64::NEG_INFINITY];
        let mut yr = [f64::INFINITY, f64::NEG_INFINITY];
        for p in self.series.iter().flat_map(|s| &s.points) {
            if p[0].is_finite() && p[1].is_finite() {
                xr = [xr[0].min(p[0]), xr[1].max(p[0])];
                yr = [yr[0].min(p[1]), yr[1].max(p[1])];
            }
        }
        let fix = |r: [f64; 2]| {
            if !r[0].is_finite() {
                [0.0, 1.0]
            } else if r[1] - r[0] <= 1e-12 * r[0].abs().max(1.0) {
                [r[0] - 0.5, r[1] + 0.5]
            } else {
                let pad = 0.03 * (r[1] - r[0]);
                [r[0] - pad, r[1] + pad]
            }
        };
        (
            self.x_range.unwrap_or_else(|| fix(xr)),
            self.y_range.unwrap_or_else(|| fix(yr)),
        )
    }
}

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Axis ticks at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (xr, yr) = panel.ranges();
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| ox + MARGIN_L + (x - xr[0]) / (xr[1] - xr[0]) * pw;
    let sy = |y: f64| oy + MARGIN_T + (1.0 - (y - yr[0]) / (yr[1] - yr[0])) * ph;
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##,
        ox + MARGIN_L,
        oy + MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="15">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + 22.0,
        escape(&panel.title)
    );
    for t in ticks(xr[0], xr[1]) {
        let x = sx(t);
        let yb = oy + MARGIN_T + ph;
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
            yb + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            yb + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(yr[0], yr[1]) {
        let y = sy(t);
        let xl = ox + MARGIN_L;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{xl:.2}" y2="{y:.2}" stroke="#333"/>"##,
            xl - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            xl - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        ox + MARGIN_L + pw / 2.0,
        oy + PANEL_H - 10.0,
        escape(&panel.x_label)
    );
    let (lx, ly) = (ox + 16.0, oy + MARGIN_T + ph / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&panel.y_label)
    );
    let clip = format!("clip{}_{}", ox as i64, oy as i64);
    let _ = writeln!(
        out,
        r#"<clipPath id="{clip}"><rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}"/></clipPath>"#,
        ox + MARGIN_L,
        oy + MARGIN_T
    );
    let _ = writeln!(out, r#"<g clip-path="url(#{clip})">"#);
    for s in &panel.series {
        if s.markers {
            for p in s.points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                    sx(p[0]),
                    sy(p[1]),
                    escape(&s.color)
                );
            }
            continue;
        }
        // non-finite points split the polyline
        for run in s.points.split(|p| !(p[0].is_finite() && p[1].is_finite())) {
            if run.len() < 2 {
                continue;
            }
            let mut d = String::new();
            for p in run {
                let _ = write!(d, "{:.2},{:.2} ", sx(p[0]), sy(p[1]));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}"{dash}/>"#,
                d.trim_end(),
                escape(&s.color),
                s.width
            );
        }
    }
    let _ = writeln!(out, "</g>");
    for (k, s) in panel.series.iter().filter(|s| !s.label.is_empty()).enumerate() {
        let y = oy + MARGIN_T + 14.0 + 16.0 * k as f64;
        let x = ox + MARGIN_L + pw - 150.0;
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="2"{dash}/>"#,
            x + 22.0,
            escape(&s.color)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            x + 28.0,
            y + 4.0,
            escape(&s.label)
        );
    }
}

/// Render panels side by side. `timestamp` is embedded as metadata when
/// given; leave it out for byte-reproducible output.
pub fn render(panels: &[Panel], timestamp: Option<&str>) -> String {
    let w = PANEL_W * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{PANEL_H:.0}" viewBox="0 0 {w:.0} {PANEL_H:.0}" font-family="sans-serif">"#
    );
    if let Some(ts) = timestamp {
        let _ = writeln!(out, "<metadata>generated {}</metadata>", escape(ts));
    }
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * k as f64, 0.0);
    }
    out.push_str("</svg>\n");
    out
}
