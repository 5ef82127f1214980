//! Minimal static SVG line charts.
//!
//! Output is a pure function of the input: coordinates are printed with a
//! fixed precision and no timestamps or random ids are emitted.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::artifact::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Solid,
    Dashed,
    Markers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of a shaded band around `y`.
    pub y_err: Option<Vec<f64>>,
    pub style: Style,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            x,
            y,
            y_err: None,
            style: Style::Solid,
        }
    }

    pub fn with_err(mut self, err: Vec<f64>) -> Self {
        self.y_err = Some(err);
        self
    }

    pub fn styled(mut self, style: Style) -> Self {
        self.style = style;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub panels: Vec<Panel>,
    pub columns: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum SvgError {
    #[error("a chart needs at least one series")]
    Empty,
    #[error("series `{series}`: {what}")]
    Shape { series: String, what: String },
    #[error("series `{series}`: non-finite values at indices {indices:?}")]
    NonFinite { series: String, indices: Vec<usize> },
    #[error("{0}")]
    Io(String),
}

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Single-panel chart written atomically to `path`.
pub fn emit_svg_line_chart(series: &[Series], x_label: &str, y_label: &str, path: &Path) -> Result<(), SvgError> {
    let fig = Figure {
        panels: vec![Panel {
            title: String::new(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: series.to_vec(),
        }],
        columns: 1,
    };
    let text = render(&fig)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| SvgError::Io(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    write_atomic(dir, &[(name, text.into_bytes())])
        .map(|_| ())
        .map_err(|e| SvgError::Io(e.to_string()))
}

fn check(s: &Series) -> Result<(), SvgError> {
    let shape = |what: String| SvgError::Shape {
        series: s.name.clone(),
        what,
    };
    if s.x.is_empty() {
        return Err(shape("no points".into()));
    }
    if s.x.len() != s.y.len() {
        return Err(shape(format!("{} x values but {} y values", s.x.len(), s.y.len())));
    }
    if let Some(e) = &s.y_err {
        if e.len() != s.y.len() {
            return Err(shape(format!("{} y values but {} error values", s.y.len(), e.len())));
        }
    }
    let bad: Vec<usize> = (0..s.x.len())
        .filter(|&i| !s.x[i].is_finite() || !s.y[i].is_finite() || s.y_err.as_ref().is_some_and(|e| !e[i].is_finite()))
        .collect();
    if !bad.is_empty() {
        return Err(SvgError::NonFinite {
            series: s.name.clone(),
            indices: bad,
        });
    }
    Ok(())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Tick positions and labels covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let step = nice_step(hi - lo);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let label = format!("{v:.decimals$}");
            let label = if label.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                "0".to_string()
            } else {
                label
            };
            (v, label)
        })
        .collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
    if b - a >= 1 {
        let stride = ((b - a) / 6 + 1).max(1);
        (a..=b).filter(|k| (k - a) % stride == 0).map(|k| (k as f64, format!("1e{k}"))).collect()
    } else {
        linear_ticks(lo, hi)
            .into_iter()
            .map(|(v, _)| (v, format!("{:.3}", 10f64.powf(v))))
            .collect()
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.x_lo) / (self.x_hi - self.x_lo) * self.w
    }
    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.y_lo) / (self.y_hi - self.y_lo) * self.h
    }
}

fn padded(lo: f64, hi: f64, frac: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * frac;
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn render_panel(out: &mut String, panel: &Panel, left: f64, top: f64) -> Result<(), SvgError> {
    if panel.series.is_empty() {
        return Err(SvgError::Empty);
    }
    panel.series.iter().try_for_each(check)?;

    let bounds = |s: &Series, i: usize| {
        let e = s.y_err.as_ref().map_or(0.0, |e| e[i].abs());
        (s.y[i] - e, s.y[i] + e)
    };
    // Values at or below zero are pinned to half the smallest positive value.
    let floor = panel
        .series
        .iter()
        .flat_map(|s| s.y.iter().copied())
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let log = panel.log_y && floor.is_finite();
    let floor = floor * 0.5;
    let ty = |v: f64| if log { v.max(floor).log10() } else { v };

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in &panel.series {
        for i in 0..s.x.len() {
            x_lo = x_lo.min(s.x[i]);
            x_hi = x_hi.max(s.x[i]);
            let (a, b) = bounds(s, i);
            y_lo = y_lo.min(ty(a));
            y_hi = y_hi.max(ty(b));
        }
    }
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { padded(x_lo, x_hi, 0.0) };
    let (y_lo, y_hi) = padded(y_lo, y_hi, 0.05);
    let f = Frame {
        x0: left + LEFT,
        y0: top + TOP,
        w: PANEL_W - LEFT - RIGHT,
        h: PANEL_H - TOP - BOTTOM,
        x_lo,
        x_hi,
        y_lo,
        y_hi,
    };

    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        f.x0, f.y0, f.w, f.h
    );
    for (v, label) in linear_ticks(x_lo, x_hi) {
        let x = f.px(v);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            f.y0,
            f.y0 + f.h,
            f.y0 + f.h + 16.0,
            escape(&label)
        );
    }
    let y_ticks = if log { log_ticks(y_lo, y_hi) } else { linear_ticks(y_lo, y_hi) };
    for (v, label) in y_ticks {
        let y = f.py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            f.x0,
            f.x0 + f.w,
            f.x0 - 6.0,
            y + 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        f.x0 + f.w / 2.0,
        top + PANEL_H - 10.0,
        escape(&panel.x_label)
    );
    let (lx, ly) = (left + 16.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&panel.y_label)
    );
    if !panel.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
            f.x0 + f.w / 2.0,
            top + 20.0,
            escape(&panel.title)
        );
    }

    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(err) = &s.y_err {
            let mut pts: Vec<String> = (0..s.x.len())
                .map(|i| format!("{:.2},{:.2}", f.px(s.x[i]), f.py(ty(s.y[i] + err[i].abs()))))
                .collect();
            pts.extend(
                (0..s.x.len())
                    .rev()
                    .map(|i| format!("{:.2},{:.2}", f.px(s.x[i]), f.py(ty(s.y[i] - err[i].abs())))),
            );
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        match s.style {
            Style::Markers => {
                for i in 0..s.x.len() {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                        f.px(s.x[i]),
                        f.py(ty(s.y[i]))
                    );
                }
            }
            Style::Solid | Style::Dashed => {
                let pts: Vec<String> = (0..s.x.len())
                    .map(|i| format!("{:.2},{:.2}", f.px(s.x[i]), f.py(ty(s.y[i]))))
                    .collect();
                let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    pts.join(" ")
                );
            }
        }
        let (kx, ky) = (f.x0 + f.w - 150.0, f.y0 + 14.0 + 14.0 * k as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{kx:.2}" y="{:.2}" width="12" height="3" fill="{color}"/><text x="{:.2}" y="{ky:.2}">{}</text>"#,
            ky - 5.0,
            kx + 16.0,
            escape(&s.name)
        );
    }
    Ok(())
}

pub fn render(fig: &Figure) -> Result<String, SvgError> {
    if fig.panels.is_empty() {
        return Err(SvgError::Empty);
    }
    let cols = fig.columns.clamp(1, fig.panels.len());
    let rows = fig.panels.len().div_ceil(cols);
    let (w, h) = (cols as f64 * PANEL_W, rows as f64 * PANEL_H);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in fig.panels.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        render_panel(&mut out, panel, c as f64 * PANEL_W, r as f64 * PANEL_H)?;
    }
    out.push_str("</svg>\n");
    Ok(out)
}
