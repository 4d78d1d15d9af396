//! Minimal SVG emitters for line charts, scatter plots and heatmaps.
//! Output is a pure function of the inputs, so re-rendering the same data
//! reproduces the same bytes.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 48.0;
const TITLE_H: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    )
    .unwrap();
    s
}

/// Value-to-pixel map of one axis, in log10 space when `log` is set.
#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil().max(lo + 1.0);
        } else if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis {
            lo,
            hi,
            log,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(self.px_lo + (t - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo))
    }

    /// Tick values and labels: decades on log axes, five even steps else.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let stride = ((b - a) / 6 + 1).max(1);
            (a..=b)
                .step_by(stride as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format_tick(v))
                })
                .collect()
        }
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn draw_panel(s: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
    let (y0, y1) = (oy + PANEL_H - MARGIN_B, oy + MARGIN_T);
    let points = || panel.series.iter().flat_map(|se| se.points.iter());
    let xa = Axis::new(points().map(|p| p.0), panel.log_x, x0, x1);
    let ya = Axis::new(points().map(|p| p.1), panel.log_y, y0, y1);
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        oy + 18.0,
        escape(&panel.title)
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    )
    .unwrap();
    for (v, label) in xa.ticks() {
        if let Some(px) = xa.map(v) {
            writeln!(
                s,
                r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                y0 + 4.0,
                y0 + 16.0
            )
            .unwrap();
        }
    }
    for (v, label) in ya.ticks() {
        if let Some(py) = ya.map(v) {
            writeln!(
                s,
                r##"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                py + 4.0
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        y0 + 34.0,
        escape(&panel.x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        ox + 16.0,
        (y0 + y1) / 2.0,
        ox + 16.0,
        (y0 + y1) / 2.0,
        escape(&panel.y_label)
    )
    .unwrap();
    for (k, series) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .filter_map(|&(x, y)| Some(format!("{:.1},{:.1}", xa.map(x)?, ya.map(y)?)))
            .collect();
        if path.len() > 1 {
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap();
            writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>"#).unwrap();
        }
        let ly = y1 + 12.0 + 13.0 * k as f64;
        writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 - 110.0,
            ly - 4.0,
            x1 - 96.0,
            ly,
            escape(&series.label)
        )
        .unwrap();
    }
}

/// Grid of line-chart panels, `columns` per row.
pub fn line_chart(title: &str, panels: &[Panel], columns: usize) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns).max(1);
    let width = PANEL_W * columns.min(panels.len().max(1)) as f64;
    let height = TITLE_H + PANEL_H * rows as f64;
    let mut s = header(width, height, title);
    for (i, panel) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % columns) as f64;
        let oy = TITLE_H + PANEL_H * (i / columns) as f64;
        draw_panel(&mut s, panel, ox, oy);
    }
    s.push_str("</svg>\n");
    s
}

/// Predicted against true values with the identity line.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut s = header(PANEL_W, TITLE_H + PANEL_H, title);
    let (x0, x1) = (MARGIN_L, PANEL_W - MARGIN_R);
    let (y0, y1) = (TITLE_H + PANEL_H - MARGIN_B, TITLE_H + MARGIN_T);
    let all = || points.iter().flat_map(|&(a, b)| [a, b]);
    // Shared range so the identity line is the diagonal.
    let xa = Axis::new(all(), false, x0, x1);
    let ya = Axis::new(all(), false, y0, y1);
    let panel = Panel {
        title: String::new(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        log_x: false,
        log_y: false,
        series: vec![Series {
            label: "y = x".into(),
            points: vec![(xa.lo, xa.lo), (xa.hi, xa.hi)],
        }],
    };
    draw_panel(&mut s, &panel, 0.0, TITLE_H);
    for &(x, y) in points {
        if let (Some(cx), Some(cy)) = (xa.map(x), ya.map(y)) {
            writeln!(
                s,
                r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="2" fill="#ff7f0e" fill-opacity="0.6"/>"##
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Blue for negative, white at zero, red for positive, scaled by the
/// largest magnitude.
fn diverging(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 {
        (v / scale).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(178.0), fade(24.0), fade(43.0))
    } else {
        (fade(33.0), fade(102.0), fade(172.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with columns left to right and rows top to bottom; a vertical
/// rule is drawn after column `separator_after` when given.
pub fn heatmap(
    title: &str,
    col_labels: &[String],
    row_labels: &[String],
    values: &[Vec<f64>],
    separator_after: Option<usize>,
) -> String {
    const CELL_W: f64 = 16.0;
    const CELL_H: f64 = 28.0;
    let (left, top) = (70.0, TITLE_H + 10.0);
    let width = left + CELL_W * col_labels.len() as f64 + 90.0;
    let height = top + CELL_H * row_labels.len() as f64 + 80.0;
    let scale = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut s = header(width, height, title);
    for (r, label) in row_labels.iter().enumerate() {
        let y = top + CELL_H * r as f64;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + CELL_H / 2.0 + 4.0,
            escape(label)
        )
        .unwrap();
        for (c, v) in values[r].iter().enumerate() {
            writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{CELL_W}" height="{CELL_H}" fill="{}"><title>{} / {}: {v:e}</title></rect>"#,
                left + CELL_W * c as f64,
                diverging(*v, scale),
                escape(label),
                escape(&col_labels[c])
            )
            .unwrap();
        }
    }
    let bottom = top + CELL_H * row_labels.len() as f64;
    for (c, label) in col_labels.iter().enumerate() {
        let x = left + CELL_W * (c as f64 + 0.5);
        writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="end" font-size="8" transform="rotate(-90 {x:.1} {:.1})">{}</text>"#,
            bottom + 6.0,
            bottom + 6.0,
            escape(label)
        )
        .unwrap();
    }
    if let Some(k) = separator_after {
        let x = left + CELL_W * (k + 1) as f64;
        writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{bottom:.1}" stroke="black" stroke-width="2"/>"#,
            top - 4.0
        )
        .unwrap();
    }
    // Color bar.
    let bx = width - 70.0;
    for i in 0..=10 {
        let v = scale * (1.0 - 0.2 * i as f64);
        writeln!(
            s,
            r#"<rect x="{bx:.1}" y="{:.1}" width="14" height="10" fill="{}"/>"#,
            top + 10.0 * i as f64,
            diverging(v, scale)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">{}</text><text x="{:.1}" y="{:.1}">{}</text>"#,
        bx + 18.0,
        top + 9.0,
        format_tick(scale),
        bx + 18.0,
        top + 109.0,
        format_tick(-scale)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
