//! Static SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    LogLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers only, no connecting line.
    pub scatter: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            scatter: false,
        }
    }

    pub fn scatter(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            scatter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub series: Vec<Series>,
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOutcome {
    pub dropped: usize,
    pub warnings: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64, log: bool) -> String {
    let v = if log { 10f64.powf(v) } else { v };
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Writes `plot` to `path`. In log-log mode, points with a non-positive
/// coordinate are dropped and reported in the outcome.
pub fn emit_plot(plot: &Plot, path: &Path) -> Result<PlotOutcome, CliError> {
    if plot.series.iter().all(|s| s.points.is_empty()) {
        return Err(CliError::output(path, "nothing to plot: every series is empty"));
    }
    let log = plot.kind == PlotKind::LogLog;
    let mut outcome = PlotOutcome::default();
    let mut mapped: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in &plot.series {
        let mut pts = Vec::new();
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                outcome.dropped += 1;
                outcome.warnings.push(format!("{}: dropped non-finite point ({x}, {y})", s.label));
            } else if log && (x <= 0.0 || y <= 0.0) {
                outcome.dropped += 1;
                outcome.warnings.push(format!("{}: dropped non-positive point ({x}, {y}) on log axes", s.label));
            } else if log {
                pts.push((x.log10(), y.log10()));
            } else {
                pts.push((x, y));
            }
        }
        mapped.push(pts);
    }
    let all: Vec<(f64, f64)> = mapped.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(CliError::output(path, "nothing to plot after dropping invalid points"));
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        all.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = {
        let (a, b) = fold(|p| p.0);
        padded(a, b)
    };
    let (y0, y1) = {
        let (a, b) = fold(|p| p.1);
        padded(a, b)
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            tick_label(xv, log)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            tick_label(yv, log)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (k, (s, pts)) in plot.series.iter().zip(&mapped).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !s.scatter && pts.len() > 1 {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                coords.join(" ")
            );
        }
        if s.scatter || pts.len() <= 40 {
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.8" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 24.0,
            escape(&s.label)
        );
    }
    if let Some(a) = &plot.annotation {
        let _ = writeln!(
            svg,
            r#"<text id="annotation" x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + 10.0,
            TOP + 18.0,
            escape(a)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| CliError::output(path, e))?;
    Ok(outcome)
}

/// Reads back the annotation text of a plot written by [`emit_plot`].
pub fn read_annotation(svg: &str) -> Option<String> {
    let start = svg.find(r#"<text id="annotation""#)?;
    let rest = &svg[start..];
    let open = rest.find('>')? + 1;
    let close = rest.find("</text>")?;
    Some(
        rest[open..close]
            .replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&amp;", "&"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(kind: PlotKind, points: Vec<(f64, f64)>) -> Plot {
        Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            kind,
            series: vec![Series::line("s", points)],
            annotation: Some("slope 0.5 & <b>".into()),
        }
    }

    #[test]
    fn two_points_write_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let out = emit_plot(&plot(PlotKind::Line, vec![(0.0, 1.0), (1.0, 2.0)]), &path).unwrap();
        assert_eq!(out.dropped, 0);
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
    }

    #[test]
    fn loglog_drops_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let out = emit_plot(&plot(PlotKind::LogLog, vec![(1.0, 1.0), (2.0, 0.0), (4.0, 16.0)]), &path).unwrap();
        assert_eq!(out.dropped, 1);
        assert!(out.warnings[0].contains("non-positive"));
    }

    #[test]
    fn annotation_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        emit_plot(&plot(PlotKind::Line, vec![(0.0, 0.0)]), &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(read_annotation(&svg).unwrap(), "slope 0.5 & <b>");
    }

    #[test]
    fn empty_series_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot(&plot(PlotKind::Line, vec![]), &dir.path().join("p.svg")).is_err());
        let all_bad = plot(PlotKind::LogLog, vec![(0.0, 1.0)]);
        assert!(emit_plot(&all_bad, &dir.path().join("q.svg")).is_err());
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("p.svg");
        assert!(emit_plot(&plot(PlotKind::Line, vec![(0.0, 1.0)]), &path).is_err());
    }
}
