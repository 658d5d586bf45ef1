//! Minimal SVG charts. Output depends only on the data, so identical
//! inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use beatlab::Result;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 58.0;

pub const BLUE: &str = "#1f5fa8";
pub const RED: &str = "#c0392b";
pub const GREY: &str = "#7f8c8d";
pub const GREEN: &str = "#2e8b57";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
    Bars,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub mark: Mark,
    pub color: &'static str,
    /// Bar width in x units for [`Mark::Bars`].
    pub width: f64,
}

impl Series {
    pub fn line(label: &str, xs: Vec<f64>, ys: Vec<f64>, color: &'static str) -> Self {
        Series {
            label: label.into(),
            xs,
            ys,
            mark: Mark::Line,
            color,
            width: 0.0,
        }
    }

    pub fn points(label: &str, xs: Vec<f64>, ys: Vec<f64>, color: &'static str) -> Self {
        Series {
            mark: Mark::Points,
            ..Series::line(label, xs, ys, color)
        }
    }

    pub fn bars(label: &str, xs: Vec<f64>, ys: Vec<f64>, width: f64, color: &'static str) -> Self {
        Series {
            mark: Mark::Bars,
            width,
            ..Series::line(label, xs, ys, color)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    fn data_range(&self, pick: impl Fn(&Series) -> Vec<f64>, bars_from_zero: bool) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.series {
            for v in pick(s).into_iter().filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if bars_from_zero && matches!(s.mark, Mark::Bars) {
                lo = lo.min(0.0);
            }
        }
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            let pad = if hi == 0.0 { 1.0 } else { 0.1 * hi.abs() };
            return (lo - pad, hi + pad);
        }
        (lo, hi)
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range.unwrap_or_else(|| {
            self.data_range(
                |s| {
                    let half = if matches!(s.mark, Mark::Bars) {
                        s.width / 2.0
                    } else {
                        0.0
                    };
                    s.xs.iter().flat_map(|x| [x - half, x + half]).collect()
                },
                false,
            )
        });
        let (y0, y1) = self.y_range.unwrap_or_else(|| {
            let (lo, hi) = self.data_range(|s| s.ys.clone(), true);
            let pad = 0.05 * (hi - lo);
            (if lo == 0.0 { 0.0 } else { lo - pad }, hi + pad)
        });
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );

        for (t, label) in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                o,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e3e3e3"/>"##,
                TOP,
                TOP + ph
            );
            let _ = writeln!(
                o,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                TOP + ph + 16.0
            );
        }
        for (t, label) in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                o,
                r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e3e3e3"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                o,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            o,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(
            o,
            r#"<clipPath id="plot-area"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>"#
        );
        let _ = writeln!(o, r#"<g clip-path="url(#plot-area)">"#);
        for s in &self.series {
            let pts =
                s.xs.iter()
                    .zip(&s.ys)
                    .filter(|(x, y)| x.is_finite() && y.is_finite());
            match s.mark {
                Mark::Line => {
                    let mut d = String::new();
                    for (x, y) in pts {
                        let _ = write!(d, "{:.2},{:.2} ", sx(*x), sy(*y));
                    }
                    let _ = writeln!(
                        o,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                        d.trim_end(),
                        s.color
                    );
                }
                Mark::Points => {
                    for (x, y) in pts {
                        let _ = writeln!(
                            o,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                            sx(*x),
                            sy(*y),
                            s.color
                        );
                    }
                }
                Mark::Bars => {
                    let base = sy(0.0f64.clamp(y0, y1));
                    for (x, y) in pts {
                        let left = sx(x - s.width / 2.0);
                        let right = sx(x + s.width / 2.0);
                        let top = sy(*y);
                        let _ = writeln!(
                            o,
                            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white"/>"#,
                            left,
                            top.min(base),
                            right - left,
                            (base - top).abs(),
                            s.color
                        );
                    }
                }
            }
        }
        let _ = writeln!(o, "</g>");

        let labelled: Vec<&Series> = self.series.iter().filter(|s| !s.label.is_empty()).collect();
        for (i, s) in labelled.iter().enumerate() {
            let y = TOP + 16.0 + 16.0 * i as f64;
            let x = LEFT + pw - 170.0;
            let _ = writeln!(
                o,
                r#"<rect x="{x:.1}" y="{:.1}" width="14" height="4" fill="{}"/>"#,
                y - 6.0,
                s.color
            );
            let _ = writeln!(
                o,
                r#"<text x="{:.1}" y="{y:.1}">{}</text>"#,
                x + 20.0,
                escape(&s.label)
            );
        }
        o.push_str("</svg>\n");
        o
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        std::fs::write(path, self.render())?;
        Ok(path.to_path_buf())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`, with labels.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return Vec::new();
    }
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 8.0)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let t = k as f64 * step;
            let mut label = format!("{t:.decimals$}");
            if label.starts_with('-') && label[1..].chars().all(|c| c == '0' || c == '.') {
                label.remove(0);
            }
            (t, label)
        })
        .collect()
}
