//! SVG figures and CSV exports.
//!
//! Output is a pure function of the input: no timestamps, no ids, fixed
//! number formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::aggregate::{
    render_grid_csv, render_summary_csv, GridSummary, Quantiles5, ReplicationSummary,
};
use crate::error::{Error, Result};
use crate::plan::escape_markup as esc;
use crate::refmodel::Indicator;
use crate::scalar::Scalar;

/// Panel rows of the timeseries figure.
pub const PANEL_ROWS: [&[Indicator]; 3] = [
    &[Indicator::Susceptible, Indicator::Recovered],
    &[
        Indicator::Presymptomatic,
        Indicator::Asymptomatic,
        Indicator::Symptomatic,
    ],
    &[Indicator::Hospitalized, Indicator::Icu, Indicator::Deaths],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgSize {
    pub width: f64,
    pub height: f64,
}

impl SvgSize {
    pub const TIMESERIES: SvgSize = SvgSize {
        width: 1200.0,
        height: 900.0,
    };
    pub const HEATMAP: SvgSize = SvgSize {
        width: 700.0,
        height: 600.0,
    };
}

const LOW_COLOR: [u8; 3] = [0xff, 0xf5, 0xeb];
const HIGH_COLOR: [u8; 3] = [0x7f, 0x27, 0x04];

const TITLE_H: f64 = 40.0;

/// Plot area in SVG coordinates and the data range it maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Frame {
    fn map(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            self.x + (dx - x0) / (x1 - x0) * self.width,
            self.y + self.height - (dy - y0) / (y1 - y0) * self.height,
        )
    }
}

/// Axis range covering `lo..=hi`; degenerate ranges widen upward by one.
pub fn axis_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Short axis label; the CSV keeps the exact value.
fn tick(v: &Scalar) -> String {
    match v {
        Scalar::Float(f) => {
            let s = format!("{f:.6}");
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        }
        other => other.to_string(),
    }
}

fn header(out: &mut String, size: SvgSize, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = num(size.width),
        h = num(size.height)
    );
    let _ = writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text class="title" x="{}" y="26" text-anchor="middle" font-size="18">{}</text>"#,
        num(size.width / 2.0),
        esc(title)
    );
}

fn points(frame: &Frame, ys: impl Iterator<Item = f64>) -> String {
    let mut s = String::new();
    for (step, y) in ys.enumerate() {
        let (px, py) = frame.map(step as f64, y);
        if !s.is_empty() {
            s.push(' ');
        }
        let _ = write!(s, "{},{}", num(px), num(py));
    }
    s
}

fn panel(out: &mut String, summary: &ReplicationSummary, ind: Indicator, frame: &Frame) {
    let band = summary.bands.get(ind);
    let _ = writeln!(
        out,
        r#"<g class="panel" data-indicator="{}" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        ind,
        num(frame.x_range.0),
        num(frame.x_range.1),
        num(frame.y_range.0),
        num(frame.y_range.1)
    );
    let _ = writeln!(
        out,
        r##"<rect class="plot" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888"/>"##,
        num(frame.x),
        num(frame.y),
        num(frame.width),
        num(frame.height)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        num(frame.x + frame.width / 2.0),
        num(frame.y - 6.0),
        ind
    );
    for (v, anchor_y) in [
        (frame.y_range.0, frame.y + frame.height),
        (frame.y_range.1, frame.y + 4.0),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            num(frame.x - 4.0),
            num(anchor_y),
            num(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">step {}</text>"#,
        num(frame.x + frame.width),
        num(frame.y + frame.height + 12.0),
        num(frame.x_range.1)
    );

    // Band outline: max left to right, then min right to left.
    let mut poly = points(frame, band.iter().map(|q| q.max));
    for (s, q) in band.iter().enumerate().rev() {
        let (px, py) = frame.map(s as f64, q.min);
        let _ = write!(poly, " {},{}", num(px), num(py));
    }
    let _ = writeln!(
        out,
        r##"<polygon class="band" points="{poly}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##
    );
    type Pick = fn(&Quantiles5) -> f64;
    let lines: [(&str, &str, Pick); 3] = [
        ("q1", "#3182bd", |q| q.q1),
        ("median", "#08306b", |q| q.median),
        ("q3", "#3182bd", |q| q.q3),
    ];
    for (class, color, pick) in lines {
        let width = if class == "median" { "1.5" } else { "1" };
        let _ = writeln!(
            out,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
            points(frame, band.iter().map(pick))
        );
    }
    out.push_str("</g>\n");
}

/// Eight small multiples in rows of 2, 3 and 3: q1/median/q3 lines over a
/// min-max band, against step.
pub fn render_timeseries(summary: &ReplicationSummary, title: &str, size: SvgSize) -> String {
    let mut out = String::new();
    header(&mut out, size, title);
    let steps = summary.bands.steps;
    let x_range = axis_range(0.0, steps.saturating_sub(1) as f64);
    let row_h = (size.height - TITLE_H) / PANEL_ROWS.len() as f64;
    for (r, row) in PANEL_ROWS.iter().enumerate() {
        let col_w = size.width / row.len() as f64;
        for (c, &ind) in row.iter().enumerate() {
            let band = summary.bands.get(ind);
            let lo = band.iter().map(|q| q.min).fold(0.0, f64::min);
            let hi = band.iter().map(|q| q.max).fold(f64::NEG_INFINITY, f64::max);
            let frame = Frame {
                x: c as f64 * col_w + 56.0,
                y: TITLE_H + r as f64 * row_h + 24.0,
                width: col_w - 76.0,
                height: row_h - 48.0,
                x_range,
                y_range: axis_range(lo, hi),
            };
            panel(&mut out, summary, ind, &frame);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Linear blend of the two scale endpoints, `t` in `[0, 1]`.
pub fn scale_color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c: Vec<u8> = LOW_COLOR
        .iter()
        .zip(HIGH_COLOR)
        .map(|(&a, b)| (a as f64 + (b as f64 - a as f64) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// One rectangle per cell, first swept parameter along x, second along y
/// (first value at the bottom), with value labels and a colour legend.
pub fn render_heatmap(grid: &GridSummary, title: &str, size: SvgSize) -> String {
    let mut out = String::new();
    header(&mut out, size, title);
    let (lo, hi) = grid.value_range();
    let (lo, hi) = if lo.is_finite() {
        axis_range(lo, hi)
    } else {
        (0.0, 1.0)
    };

    let legend_w = 100.0;
    let left = 80.0;
    let top = TITLE_H + 10.0;
    let bottom = 60.0;
    let plot_w = size.width - left - legend_w - 20.0;
    let plot_h = size.height - top - bottom;
    let nx = grid.x_values.len().max(1);
    let ny = grid.y_values.len().max(1);
    let cw = plot_w / nx as f64;
    let ch = plot_h / ny as f64;

    let _ = writeln!(
        out,
        r#"<g class="heatmap" data-indicator="{}" data-min="{}" data-max="{}">"#,
        grid.indicator,
        num(lo),
        num(hi)
    );
    for (yi, row) in grid.cells.iter().enumerate() {
        for (xi, &v) in row.iter().enumerate() {
            let t = (v - lo) / (hi - lo);
            let x = left + xi as f64 * cw;
            let y = top + (ny - 1 - yi) as f64 * ch;
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#ffffff"/>"##,
                num(x),
                num(y),
                num(cw),
                num(ch),
                scale_color(t)
            );
            let ink = if t > 0.5 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                out,
                r#"<text class="value" x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" font-size="11" fill="{ink}">{}</text>"#,
                num(x + cw / 2.0),
                num(y + ch / 2.0),
                num(v)
            );
        }
    }
    for (xi, v) in grid.x_values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="x-tick" x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            num(left + (xi as f64 + 0.5) * cw),
            num(top + plot_h + 14.0),
            esc(&tick(v))
        );
    }
    for (yi, v) in grid.y_values.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="y-tick" x="{}" y="{}" text-anchor="end" dominant-baseline="middle" font-size="10">{}</text>"#,
            num(left - 4.0),
            num(top + (ny as f64 - 0.5 - yi as f64) * ch),
            esc(&tick(v))
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="x-label" x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        num(left + plot_w / 2.0),
        num(size.height - 16.0),
        esc(&grid.x_param)
    );
    let _ = writeln!(
        out,
        r#"<text class="y-label" x="16" y="{y}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {y})">{}</text>"#,
        esc(&grid.y_param),
        y = num(top + plot_h / 2.0)
    );
    out.push_str("</g>\n");

    // Legend: vertical gradient, high at the top.
    let lx = size.width - legend_w;
    let _ = writeln!(
        out,
        r#"<defs><linearGradient id="scale" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        scale_color(0.0),
        scale_color(1.0)
    );
    let _ = writeln!(
        out,
        r#"<g class="legend" data-min="{}" data-max="{}">"#,
        num(lo),
        num(hi)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="18" height="{}" fill="url(#scale)" stroke="#888888"/>"##,
        num(lx),
        num(top),
        num(plot_h)
    );
    for (v, y) in [(hi, top + 4.0), (lo, top + plot_h)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10">{}</text>"#,
            num(lx + 24.0),
            num(y),
            num(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="11" transform="rotate(90 {x} {y})">{}</text>"#,
        grid.indicator.label(),
        x = num(lx + 70.0),
        y = num(top + plot_h / 2.0)
    );
    out.push_str("</g>\n</svg>\n");
    out
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn export_summary_csv(summary: &ReplicationSummary, path: &Path) -> Result<PathBuf> {
    write_file(path, &render_summary_csv(&summary.bands))
}

pub fn export_grid_csv(grid: &GridSummary, path: &Path) -> Result<PathBuf> {
    write_file(path, &render_grid_csv(grid)?)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<PathBuf> {
    write_file(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{parse_grid_csv, parse_summary_csv, GridIndicator, IndicatorBands};
    use crate::scalar::{Assignment, Scalar};

    fn summary(steps: usize, f: impl Fn(usize, usize) -> f64) -> ReplicationSummary {
        ReplicationSummary {
            point_index: 3,
            assignment: Assignment(vec![("a".into(), Scalar::Float(0.5))]),
            replication_count: 4,
            bands: IndicatorBands {
                steps,
                bands: (0..8)
                    .map(|i| {
                        (0..steps)
                            .map(|s| {
                                let v = f(i, s);
                                Quantiles5 {
                                    min: v,
                                    q1: v + 1.0,
                                    median: v + 2.0,
                                    q3: v + 3.0,
                                    max: v + 5.0,
                                }
                            })
                            .collect()
                    })
                    .collect(),
            },
        }
    }

    fn attr(tag: &str, name: &str) -> f64 {
        let key = format!(" {name}=\"");
        let start = tag.find(&key).unwrap() + key.len();
        tag[start..].split('"').next().unwrap().parse().unwrap()
    }

    #[test]
    fn eight_panels_three_lines_one_band() {
        let svg = render_timeseries(
            &summary(50, |i, s| (i * s) as f64),
            "t",
            SvgSize::TIMESERIES,
        );
        assert_eq!(svg.matches("<g class=\"panel\"").count(), 8);
        for chunk in svg.split("<g class=\"panel\"").skip(1) {
            let body = chunk.split("</g>").next().unwrap();
            assert_eq!(body.matches("<polyline").count(), 3);
            assert_eq!(body.matches("<polygon").count(), 1);
        }
    }

    #[test]
    fn points_stay_inside_plot_area() {
        let svg = render_timeseries(
            &summary(120, |i, s| ((s * 37 + i * 11) % 97) as f64 * 1.5),
            "t",
            SvgSize::TIMESERIES,
        );
        for chunk in svg.split("<g class=\"panel\"").skip(1) {
            let plot = chunk.split("<rect class=\"plot\"").nth(1).unwrap();
            let (x, y, w, h) = (
                attr(plot, "x"),
                attr(plot, "y"),
                attr(plot, "width"),
                attr(plot, "height"),
            );
            for shape in chunk.split(" points=\"").skip(1) {
                for p in shape.split('"').next().unwrap().split(' ') {
                    let (px, py) = p.split_once(',').unwrap();
                    let (px, py): (f64, f64) = (px.parse().unwrap(), py.parse().unwrap());
                    assert!(
                        px >= x - 0.01 && px <= x + w + 0.01,
                        "{px} outside [{x}, {}]",
                        x + w
                    );
                    assert!(
                        py >= y - 0.01 && py <= y + h + 0.01,
                        "{py} outside [{y}, {}]",
                        y + h
                    );
                }
            }
        }
    }

    #[test]
    fn zero_series_uses_unit_axis() {
        let mut s = summary(10, |_, _| 0.0);
        for band in &mut s.bands.bands {
            for q in band.iter_mut() {
                *q = Quantiles5::constant(0.0);
            }
        }
        let svg = render_timeseries(&s, "zero", SvgSize::TIMESERIES);
        assert_eq!(svg.matches(r#"data-y-min="0" data-y-max="1""#).count(), 8);
    }

    #[test]
    fn single_step_is_drawable() {
        let svg = render_timeseries(&summary(1, |_, _| 2.0), "one", SvgSize::TIMESERIES);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn render_is_deterministic() {
        let s = summary(30, |i, s| (i + s) as f64);
        assert_eq!(
            render_timeseries(&s, "x & y", SvgSize::TIMESERIES),
            render_timeseries(&s, "x & y", SvgSize::TIMESERIES)
        );
        assert!(render_timeseries(&s, "x & y", SvgSize::TIMESERIES).contains("x &amp; y"));
    }

    fn grid(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> GridSummary {
        GridSummary {
            indicator: GridIndicator::Deaths,
            x_param: "basic_viral_release".into(),
            y_param: "basic_viral_decrease".into(),
            x_values: (0..nx)
                .map(|i| Scalar::Float(0.01 * (i + 1) as f64))
                .collect(),
            y_values: (0..ny)
                .map(|i| Scalar::Float(0.02 * (i + 1) as f64))
                .collect(),
            cells: (0..ny)
                .map(|y| (0..nx).map(|x| f(x, y)).collect())
                .collect(),
        }
    }

    #[test]
    fn heatmap_cell_counts() {
        let svg = render_heatmap(&grid(10, 10, |x, y| (x * y) as f64), "d", SvgSize::HEATMAP);
        assert_eq!(svg.matches("<rect class=\"cell\"").count(), 100);
        assert_eq!(svg.matches("<text class=\"value\"").count(), 100);
        assert!(svg.contains("<g class=\"legend\""));
        let one = render_heatmap(&grid(1, 1, |_, _| 7.0), "d", SvgSize::HEATMAP);
        assert_eq!(one.matches("<rect class=\"cell\"").count(), 1);
        assert!(one.contains(">7</text>"));
    }

    #[test]
    fn flat_heatmap_has_nonzero_legend() {
        let svg = render_heatmap(&grid(3, 2, |_, _| 4.0), "flat", SvgSize::HEATMAP);
        assert!(svg.contains(r#"<g class="legend" data-min="4" data-max="5">"#));
        let fills: std::collections::BTreeSet<&str> = svg
            .split("<rect class=\"cell\"")
            .skip(1)
            .map(|c| {
                c.split("fill=\"")
                    .nth(1)
                    .unwrap()
                    .split('"')
                    .next()
                    .unwrap()
            })
            .collect();
        assert_eq!(fills.len(), 1);
    }

    #[test]
    fn scale_endpoints() {
        assert_eq!(scale_color(0.0), "#fff5eb");
        assert_eq!(scale_color(1.0), "#7f2704");
        assert_eq!(scale_color(f64::NAN), "#fff5eb");
    }

    #[test]
    fn exports_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(4, 3, |x, y| x as f64 + 0.5 * y as f64);
        let p = export_grid_csv(&g, &dir.path().join("grid-deaths.csv")).unwrap();
        let back = parse_grid_csv(&fs::read_to_string(p).unwrap(), GridIndicator::Deaths).unwrap();
        assert_eq!(back, g);

        let s = summary(100, |i, s| (i * s) as f64);
        let p = export_summary_csv(&s, &dir.path().join("point-3-summary.csv")).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count() - 1, 800);
        assert_eq!(parse_summary_csv(&text).unwrap(), s.bands);
    }

    #[test]
    fn unwritable_export_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("missing").join("grid-deaths.csv");
        let err = export_grid_csv(&grid(1, 1, |_, _| 0.0), &bad).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
