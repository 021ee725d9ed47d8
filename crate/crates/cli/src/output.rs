//! CSV tables and line-chart SVGs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Full-precision scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let err = |source| CliError::Csv { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Io { path: PathBuf::from(path), source })
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 360.0;
const MARGIN: f64 = 60.0;

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn render_panel(out: &mut String, c: &Chart, top: f64) {
    let tr = |v: f64| if c.log { v.log10() } else { v };
    let pts: Vec<(f64, f64)> = c
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (tr(x), tr(y))))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * w;
    let sy = |y: f64| top + MARGIN + h - (y - y0) / (y1 - y0) * h;

    let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"##, PANEL_W / 2.0, top + 24.0, c.title);
    let _ = writeln!(out, r##"<rect x="{MARGIN}" y="{:.1}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##, top + MARGIN);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##, sx(fx), top + MARGIN + h + 14.0, fmt_tick(fx, c.log));
        let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##, MARGIN - 4.0, sy(fy) + 3.0, fmt_tick(fy, c.log));
    }
    let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"##, PANEL_W / 2.0, top + PANEL_H - 14.0, c.x_label);
    let _ = writeln!(out, r##"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"##, top + PANEL_H / 2.0, top + PANEL_H / 2.0, c.y_label);
    for (i, s) in c.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| (tr(x), tr(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(out, r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##, path.join(" "));
        let ly = top + MARGIN + 14.0 + 14.0 * i as f64;
        let _ = writeln!(out, r##"<text x="{:.1}" y="{ly:.1}" font-size="11" fill="{color}">{}</text>"##, MARGIN + 8.0, s.name);
    }
}

/// Vertically stacked panels in one document.
pub fn render_svg(charts: &[Chart]) -> String {
    let height = PANEL_H * charts.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}">"##
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (i, c) in charts.iter().enumerate() {
        render_panel(&mut out, c, PANEL_H * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Least-squares slope of `log y` against `log x` over finite positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let p: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q.0).sum::<f64>() / n;
    let my = p.iter().map(|q| q.1).sum::<f64>() / n;
    let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
    let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(-0.5))).collect();
        assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 7.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn svg_is_well_formed() {
        let c = Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log: true,
            series: vec![Series { name: "s".into(), points: vec![(1.0, 1.0), (10.0, 0.1), (0.0, 1.0)] }],
        };
        let s = render_svg(&[c]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }
}
