//! CSV forms of point summaries and grids.
//!
//! Summary: `step,indicator,min,q1,median,q3,max`, indicator-major in
//! exported-indicator order. Grid: first row holds the x values, first
//! column the y values; the corner cell is `<yParam>\<xParam>`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GridIndicator, GridSummary, IndicatorBands, Quantiles5};
use crate::error::{Error, Result};
use crate::refmodel::Indicator;
use crate::scalar::Scalar;

pub const SUMMARY_HEADER: &str = "step,indicator,min,q1,median,q3,max";

pub fn summary_file_name(point_index: u64) -> String {
    format!("point-{point_index}-summary.csv")
}

pub fn grid_file_name(indicator: GridIndicator) -> String {
    format!("grid-{indicator}.csv")
}

pub fn render_summary_csv(bands: &IndicatorBands) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for ind in Indicator::ALL {
        for (step, q) in bands.get(ind).iter().enumerate() {
            let _ = writeln!(
                out,
                "{step},{ind},{:?},{:?},{:?},{:?},{:?}",
                q.min, q.q1, q.median, q.q3, q.max
            );
        }
    }
    out
}

pub fn parse_summary_csv(text: &str) -> Result<IndicatorBands> {
    const CTX: &str = "summary csv";
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::format(1, CTX, "unexpected header"));
    }
    let mut bands: Vec<Vec<Quantiles5>> = vec![Vec::new(); Indicator::ALL.len()];
    let mut current = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(
                line_no,
                CTX,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let ind = Indicator::from_name(fields[1]).ok_or_else(|| {
            Error::format(line_no, CTX, format!("unknown indicator `{}`", fields[1]))
        })?;
        if ind.index() < current {
            return Err(Error::format(line_no, CTX, "indicators out of order"));
        }
        current = ind.index();
        let step: usize = fields[0]
            .parse()
            .map_err(|_| Error::format(line_no, CTX, format!("invalid step `{}`", fields[0])))?;
        let series = &mut bands[current];
        if step != series.len() {
            return Err(Error::format(
                line_no,
                CTX,
                format!("expected step {}, got {step}", series.len()),
            ));
        }
        let mut v = [0.0; 5];
        for (slot, f) in v.iter_mut().zip(&fields[2..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(line_no, CTX, format!("invalid number `{f}`")))?;
        }
        let q = Quantiles5 {
            min: v[0],
            q1: v[1],
            median: v[2],
            q3: v[3],
            max: v[4],
        };
        if !q.is_ordered() {
            return Err(Error::format(line_no, CTX, "band is not ordered"));
        }
        series.push(q);
    }
    let steps = bands[0].len();
    if steps == 0 || bands.iter().any(|b| b.len() != steps) {
        return Err(Error::format(
            0,
            CTX,
            "indicators have unequal or zero length",
        ));
    }
    Ok(IndicatorBands { steps, bands })
}

pub fn render_grid_csv(grid: &GridSummary) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("grid csv: {e}"));
    let mut header = vec![format!("{}\\{}", grid.y_param, grid.x_param)];
    header.extend(grid.x_values.iter().map(Scalar::to_string));
    w.write_record(&header).map_err(csv_err)?;
    for (y, row) in grid.y_values.iter().zip(&grid.cells) {
        let mut record = vec![y.to_string()];
        record.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("grid csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("grid csv: {e}")))
}

pub fn parse_grid_csv(text: &str, indicator: GridIndicator) -> Result<GridSummary> {
    const CTX: &str = "grid csv";
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        records.push(rec.map_err(|e| Error::format(i + 1, CTX, e.to_string()))?);
    }
    let (header, rows) = records
        .split_first()
        .ok_or_else(|| Error::format(1, CTX, "empty file"))?;
    let corner = header.get(0).unwrap_or_default();
    let (y_param, x_param) = corner
        .split_once('\\')
        .filter(|(y, x)| !y.is_empty() && !x.is_empty())
        .ok_or_else(|| Error::format(1, CTX, "corner cell must be `<yParam>\\<xParam>`"))?;
    let x_values: Vec<Scalar> = header.iter().skip(1).map(Scalar::parse_untyped).collect();
    if x_values.is_empty() || rows.is_empty() {
        return Err(Error::format(1, CTX, "grid has no cells"));
    }
    let mut y_values = Vec::with_capacity(rows.len());
    let mut cells = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let line = i + 2;
        if rec.len() != x_values.len() + 1 {
            return Err(Error::format(line, CTX, "row length differs from header"));
        }
        y_values.push(Scalar::parse_untyped(&rec[0]));
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(line, CTX, format!("invalid number `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(GridSummary {
        indicator,
        x_param: x_param.to_string(),
        y_param: y_param.to_string(),
        x_values,
        y_values,
        cells,
    })
}

/// Reads `grid-<indicator>.csv`, taking the indicator from the file name.
pub fn read_grid_csv(path: &Path) -> Result<GridSummary> {
    let indicator = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("grid-")?.strip_suffix(".csv"))
        .and_then(GridIndicator::from_name)
        .ok_or_else(|| {
            Error::format(
                0,
                path.display().to_string(),
                "not a grid-<indicator>.csv file",
            )
        })?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid_csv(&text, indicator)
}
