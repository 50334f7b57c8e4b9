//! Minimal SVG line charts built from the CSV files the sweeps write.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 150.0, 40.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Numeric table read back from a sweep CSV: header cells and rows.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { header, rows })
    }

    /// Column whose header starts with `name` followed by a space or the end.
    pub fn column(&self, name: &str) -> Option<(usize, &str)> {
        self.header
            .iter()
            .position(|h| h == name || h.starts_with(&format!("{name} ")))
            .map(|k| (k, self.header[k].as_str()))
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series as an SVG document. With `log_x`, x values must be
/// positive and the axis is logarithmic.
pub fn line_chart(title: &str, x_label: &str, series: &[Series], log_x: bool) -> Result<String> {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        bail!("nothing to plot for '{title}'");
    }
    if x1 - x0 < 1e-300 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 * y1.abs().max(1e-300) {
        y0 -= 0.5 * y0.abs().max(1.0);
        y1 += 0.5 * y1.abs().max(1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (l, r, t, b) = MARGIN;
    let (pw, ph) = (WIDTH - l - r, HEIGHT - t - b);
    let px = |x: f64| l + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| t + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, l + pw / 2.0, escape(title))?;
    writeln!(s, r#"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#)?;
    let xticks: Vec<f64> = if log_x {
        (x0.ceil() as i32..=x1.floor() as i32).map(|e| 10f64.powi(e)).collect()
    } else {
        nice_ticks(x0, x1)
    };
    for xt in xticks {
        let x = px(xt);
        writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, t + ph, t + ph + 5.0)?;
        writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, t + ph + 18.0, fmt_tick(xt))?;
    }
    for yt in nice_ticks(y0, y1) {
        let y = py(yt);
        writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/>"#, l - 5.0)?;
        writeln!(s, r##"<line x1="{l}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e0e0e0"/>"##, l + pw)?;
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, y + 4.0, fmt_tick(yt))?;
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        l + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    )?;
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &ser.points {
            if !(x.is_finite() && y.is_finite()) || (log_x && x <= 0.0) {
                pen_down = false;
                continue;
            }
            write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(x), py(y))?;
            pen_down = true;
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end())?;
        let ly = t + 14.0 + 18.0 * k as f64;
        let lx = l + pw + 12.0;
        writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0)?;
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.label))?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Plots `ys` against `x` from a sweep CSV and writes `svg_path`.
pub fn plot_csv(csv_path: &Path, svg_path: &Path, title: &str, x: &str, ys: &[&str], log_x: bool) -> Result<()> {
    let table = Table::read(csv_path)?;
    let (xi, x_label) = table
        .column(x)
        .with_context(|| format!("no column {x} in {}", csv_path.display()))?;
    let mut series = Vec::new();
    for name in ys {
        if let Some((yi, label)) = table.column(name) {
            series.push(Series {
                label: label.to_string(),
                points: table.rows.iter().map(|r| (r[xi], r[yi])).collect(),
            });
        }
    }
    if series.is_empty() {
        return Ok(());
    }
    let svg = line_chart(title, x_label, &series, log_x)?;
    std::fs::write(svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 1.0);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(t.len() >= 3 && t.len() <= 7);
    }

    #[test]
    fn chart_has_one_path_per_series() {
        let series = vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 0.0), (1.0, 1.0)],
            },
            Series {
                label: "b<c".into(),
                points: vec![(0.0, 1.0), (0.5, f64::NAN), (1.0, 0.0)],
            },
        ];
        let svg = line_chart("t", "x", &series, false).unwrap();
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(line_chart("t", "x", &[], false).is_err());
    }

    #[test]
    fn log_axis_skips_nonpositive() {
        let series = vec![Series {
            label: "a".into(),
            points: vec![(0.0, 0.0), (0.01, 0.1), (10.0, 1.0)],
        }];
        let svg = line_chart("t", "x", &series, true).unwrap();
        assert!(svg.contains(">0.01<") || svg.contains(">1e-2<"));
    }
}
