//! Minimal static SVG plots: scatter/line panels and masked heat maps.

use std::fmt::Write;

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 290.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 46.0;

#[derive(Debug, Clone)]
pub enum Series {
    /// Markers with optional symmetric error bars.
    Points {
        xy: Vec<(f64, f64)>,
        err: Option<Vec<f64>>,
        color: &'static str,
    },
    Line {
        xy: Vec<(f64, f64)>,
        color: &'static str,
        dashed: bool,
    },
}

impl Series {
    fn xy(&self) -> &[(f64, f64)] {
        match self {
            Series::Points { xy, .. } | Series::Line { xy, .. } => xy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    /// Horizontal reference line.
    pub hline: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    /// Cell centres and values; absent cells are drawn as masked.
    pub cells: Vec<(f64, f64, f64)>,
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x0: f64,
    y0: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + LEFT + (x - self.xr.0) / (self.xr.1 - self.xr.0) * (PANEL_W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H
            - BOTTOM
            - (y - self.yr.0) / (self.yr.1 - self.yr.0) * (PANEL_H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r) = (self.x0 + LEFT, self.x0 + PANEL_W - RIGHT);
        let (t, b) = (self.y0 + TOP, self.y0 + PANEL_H - BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.xr.0 + f * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + f * (self.yr.1 - self.yr.0);
            let (x, y) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                b + 4.0,
                b + 15.0,
                tick_label(xv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                l - 4.0,
                l - 6.0,
                y + 3.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            self.y0 + 18.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            b + 32.0,
            escape(xlabel)
        );
        let (cx, cy) = (self.x0 + 14.0, (t + b) / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{cy:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {cx:.1} {cy:.1})">{}</text>"#,
            escape(ylabel)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn document(cols: usize, count: usize, body: String) -> String {
    let rows = count.div_ceil(cols.max(1)).max(1);
    let (w, h) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

pub fn line_figure(panels: &[Panel], cols: usize) -> String {
    let mut out = String::new();
    for (k, p) in panels.iter().enumerate() {
        let xs = p.series.iter().flat_map(|s| s.xy().iter().map(|v| v.0));
        let ys = p.series.iter().flat_map(|s| match s {
            Series::Points {
                xy, err: Some(e), ..
            } => xy
                .iter()
                .zip(e)
                .flat_map(|(v, e)| [v.1 - e, v.1 + e])
                .collect::<Vec<_>>(),
            other => other.xy().iter().map(|v| v.1).collect(),
        });
        let frame = Frame {
            x0: (k % cols) as f64 * PANEL_W,
            y0: (k / cols) as f64 * PANEL_H,
            xr: bounds(xs),
            yr: bounds(ys.chain(p.hline)),
        };
        frame.axes(&mut out, &p.title, &p.xlabel, &p.ylabel);
        if let Some(h) = p.hline {
            let y = frame.py(h);
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="red" stroke-dasharray="6 4"/>"#,
                frame.px(frame.xr.0),
                frame.px(frame.xr.1)
            );
        }
        for s in &p.series {
            match s {
                Series::Line { xy, color, dashed } => {
                    let pts: Vec<String> = xy
                        .iter()
                        .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
                        .collect();
                    let dash = if *dashed {
                        r#" stroke-dasharray="4 3""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        pts.join(" ")
                    );
                }
                Series::Points { xy, err, color } => {
                    for (j, &(x, y)) in xy.iter().enumerate() {
                        let (cx, cy) = (frame.px(x), frame.py(y));
                        if let Some(e) = err.as_ref().map(|e| e[j]) {
                            let _ = writeln!(
                                out,
                                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
                                frame.py(y - e),
                                frame.py(y + e)
                            );
                        }
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="2.5" fill="{color}"/>"#
                        );
                    }
                }
            }
        }
    }
    document(cols, panels.len(), out)
}

/// Grey-scale maps on a regular raster; settings absent from `cells` are
/// painted in a distinct mask colour.
pub fn heatmap_figure(maps: &[Heatmap], cols: usize) -> String {
    let mut out = String::new();
    for (k, m) in maps.iter().enumerate() {
        let unique = |f: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = m.cells.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (xs, ys) = (unique(|c| c.0), unique(|c| c.1));
        let step = |v: &[f64]| {
            if v.len() > 1 {
                (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
            } else {
                1.0
            }
        };
        let (sx, sy) = (step(&xs), step(&ys));
        let span = |v: &[f64], s: f64| match (v.first(), v.last()) {
            (Some(a), Some(b)) => (a - s / 2.0, b + s / 2.0),
            _ => (0.0, 1.0),
        };
        let frame = Frame {
            x0: (k % cols) as f64 * PANEL_W,
            y0: (k / cols) as f64 * PANEL_H,
            xr: span(&xs, sx),
            yr: span(&ys, sy),
        };
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#203060"/>"##,
            frame.px(frame.xr.0),
            frame.py(frame.yr.1),
            frame.px(frame.xr.1) - frame.px(frame.xr.0),
            frame.py(frame.yr.0) - frame.py(frame.yr.1)
        );
        let vmax = m
            .cells
            .iter()
            .map(|c| c.2)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        for &(x, y, v) in &m.cells {
            let g = (255.0 * (1.0 - (v / vmax).clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({g},{g},{g})"/>"#,
                frame.px(x - sx / 2.0),
                frame.py(y + sy / 2.0),
                frame.px(x + sx / 2.0) - frame.px(x - sx / 2.0),
                frame.py(y - sy / 2.0) - frame.py(y + sy / 2.0)
            );
        }
        frame.axes(&mut out, &m.title, &m.xlabel, &m.ylabel);
    }
    document(cols, maps.len(), out)
}
