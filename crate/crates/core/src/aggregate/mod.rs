//! Replication statistics.
//!
//! Raw trajectories are reduced point by point: per-step five-number bands
//! for every indicator, and per-point scalar medians (total deaths, last day
//! with a death, peak hospital load) for the grid views. Only one point's
//! replications are held in memory at a time.

mod io;
mod quantile;

use std::fmt;
use std::fs;
use std::path::Path;

pub use io::{
    grid_file_name, parse_grid_csv, parse_summary_csv, read_grid_csv, render_grid_csv,
    render_summary_csv, summary_file_name, SUMMARY_HEADER,
};
pub use quantile::{median, quantile_sorted, quantiles5, Quantiles5};

use crate::error::{Error, Result};
use crate::plan::{enumerate_values, ExperimentPlan, ParameterSpec};
use crate::pool::map_bounded;
use crate::refmodel::{read_trajectory, trajectory_file_name, Indicator, Trajectory};
use crate::scalar::{Assignment, Scalar};

/// Ragged trajectories padded to a common length, `[indicator][replication][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub steps: usize,
    pub series: Vec<Vec<Vec<u64>>>,
}

/// Pads every trajectory to the longest one by repeating its final row.
pub fn align_trajectories(trajectories: &[Trajectory]) -> Result<Aligned> {
    if trajectories.is_empty() {
        return Err(Error::Data("no trajectories to align".into()));
    }
    if let Some(t) = trajectories.iter().find(|t| t.is_empty()) {
        return Err(Error::Data(format!("task {} has no rows", t.task_id)));
    }
    let steps = trajectories.iter().map(Trajectory::len).max().unwrap_or(0);
    let series = Indicator::ALL
        .iter()
        .map(|&ind| {
            trajectories
                .iter()
                .map(|t| {
                    let mut s: Vec<u64> = t.series(ind).collect();
                    let last = *s.last().expect("non-empty");
                    s.resize(steps, last);
                    s
                })
                .collect()
        })
        .collect();
    Ok(Aligned { steps, series })
}

/// Per-step bands for each indicator, indexed by [`Indicator::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorBands {
    pub steps: usize,
    pub bands: Vec<Vec<Quantiles5>>,
}

impl IndicatorBands {
    pub fn get(&self, indicator: Indicator) -> &[Quantiles5] {
        &self.bands[indicator.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub point_index: u64,
    pub assignment: Assignment,
    pub replication_count: usize,
    pub bands: IndicatorBands,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub point_index: u64,
    pub assignment: Assignment,
    pub median_total_deaths: f64,
    /// Days, i.e. step / 24.
    pub median_last_death_day: f64,
    pub median_peak_hospitalized: f64,
}

/// Scalar shown on a grid view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridIndicator {
    Deaths,
    LastDeathDay,
    PeakHospitalized,
}

impl GridIndicator {
    pub const ALL: [GridIndicator; 3] = [
        GridIndicator::Deaths,
        GridIndicator::LastDeathDay,
        GridIndicator::PeakHospitalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridIndicator::Deaths => "deaths",
            GridIndicator::LastDeathDay => "lastDeathDay",
            GridIndicator::PeakHospitalized => "peakHospitalized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        GridIndicator::ALL.into_iter().find(|g| g.name() == name)
    }

    pub fn label(self) -> &'static str {
        match self {
            GridIndicator::Deaths => "median total deaths",
            GridIndicator::LastDeathDay => "median last day with a death",
            GridIndicator::PeakHospitalized => "median peak hospitalized",
        }
    }

    pub fn value(self, s: &PointSummary) -> f64 {
        match self {
            GridIndicator::Deaths => s.median_total_deaths,
            GridIndicator::LastDeathDay => s.median_last_death_day,
            GridIndicator::PeakHospitalized => s.median_peak_hospitalized,
        }
    }
}

impl fmt::Display for GridIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GridIndicator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GridIndicator::from_name(s).ok_or_else(|| {
            format!("unknown grid indicator `{s}` (deaths|lastDeathDay|peakHospitalized)")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub indicator: GridIndicator,
    pub x_param: String,
    pub y_param: String,
    pub x_values: Vec<Scalar>,
    pub y_values: Vec<Scalar>,
    /// `cells[y][x]`.
    pub cells: Vec<Vec<f64>>,
}

impl GridSummary {
    pub fn value_range(&self) -> (f64, f64) {
        self.cells
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Point shared by every trajectory, checked against the plan.
fn common_point(plan: &ExperimentPlan, trajectories: &[Trajectory]) -> Result<u64> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Data("no trajectories for point".into()))?;
    let point_of = |t: &Trajectory| {
        plan.point_of(t.task_id)
            .ok_or_else(|| Error::Data(format!("task {} is not in the plan", t.task_id)))
    };
    let point = point_of(first)?;
    for t in trajectories {
        let p = point_of(t)?;
        if p != point {
            return Err(Error::Data(format!(
                "task {} belongs to point {p}, expected point {point}",
                t.task_id
            )));
        }
    }
    Ok(point)
}

/// Per-step five-number bands across the replications of one point.
pub fn summarize_point(
    plan: &ExperimentPlan,
    trajectories: &[Trajectory],
) -> Result<ReplicationSummary> {
    let point_index = common_point(plan, trajectories)?;
    let aligned = align_trajectories(trajectories)?;
    let mut column = Vec::with_capacity(trajectories.len());
    let bands = aligned
        .series
        .iter()
        .map(|reps| {
            (0..aligned.steps)
                .map(|step| {
                    column.clear();
                    column.extend(reps.iter().map(|s| s[step] as f64));
                    quantiles5(&column)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationSummary {
        point_index,
        assignment: plan
            .point_assignment(point_index)
            .cloned()
            .unwrap_or_default(),
        replication_count: trajectories.len(),
        bands: IndicatorBands {
            steps: aligned.steps,
            bands,
        },
    })
}

/// Total deaths, last day with a new death (0 when none) and peak
/// hospital occupancy of one trajectory.
pub fn trajectory_scalars(t: &Trajectory) -> (f64, f64, f64) {
    let mut prev = 0;
    let mut last_step = None;
    for row in &t.rows {
        let d = row.get(Indicator::Deaths);
        if d > prev {
            last_step = Some(row.step);
        }
        prev = d;
    }
    let total = t.rows.last().map_or(0, |r| r.get(Indicator::Deaths));
    let last_day = last_step.map_or(0, |s| s / 24);
    let peak = t.series(Indicator::Hospitalized).max().unwrap_or(0);
    (total as f64, last_day as f64, peak as f64)
}

pub fn summarize_scalars(
    plan: &ExperimentPlan,
    trajectories: &[Trajectory],
) -> Result<PointSummary> {
    let point_index = common_point(plan, trajectories)?;
    let per_rep: Vec<_> = trajectories.iter().map(trajectory_scalars).collect();
    let pick = |f: fn(&(f64, f64, f64)) -> f64| median(&per_rep.iter().map(f).collect::<Vec<_>>());
    Ok(PointSummary {
        point_index,
        assignment: plan
            .point_assignment(point_index)
            .cloned()
            .unwrap_or_default(),
        median_total_deaths: pick(|s| s.0)?,
        median_last_death_day: pick(|s| s.1)?,
        median_peak_hospitalized: pick(|s| s.2)?,
    })
}

/// Tasks of `plan` whose trajectory file is absent from `results_dir`.
pub fn missing_tasks(plan: &ExperimentPlan, results_dir: &Path) -> Vec<u64> {
    plan.tasks
        .iter()
        .map(|t| t.task_id)
        .filter(|&id| !results_dir.join(trajectory_file_name(id)).is_file())
        .collect()
}

/// Reads the replications of one point.
pub fn load_point(
    plan: &ExperimentPlan,
    results_dir: &Path,
    point_index: u64,
) -> Result<Vec<Trajectory>> {
    let tasks = plan.point_tasks(point_index);
    if tasks.is_empty() {
        return Err(Error::Data(format!(
            "point {point_index} is not in the plan"
        )));
    }
    let missing: Vec<u64> = tasks
        .iter()
        .map(|t| t.task_id)
        .filter(|&id| !results_dir.join(trajectory_file_name(id)).is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing trajectories for tasks {missing:?}"
        )));
    }
    tasks
        .iter()
        .map(|t| read_trajectory(&results_dir.join(trajectory_file_name(t.task_id))))
        .collect()
}

/// Summaries of every point, computed with at most `workers` points in memory.
pub fn aggregate_points(
    plan: &ExperimentPlan,
    results_dir: &Path,
    workers: usize,
) -> Result<Vec<(ReplicationSummary, PointSummary)>> {
    let points: Vec<u64> = (0..plan.point_count()).collect();
    map_bounded(&points, workers, |&p| {
        let runs = load_point(plan, results_dir, p)?;
        Ok((
            summarize_point(plan, &runs)?,
            summarize_scalars(plan, &runs)?,
        ))
    })
    .into_iter()
    .collect()
}

/// Matrix of one scalar over a two-parameter sweep, axes in enumeration order.
pub fn build_grid(
    specs: &[ParameterSpec],
    summaries: &[PointSummary],
    x_param: &str,
    y_param: &str,
    indicator: GridIndicator,
) -> Result<GridSummary> {
    if specs.len() != 2 {
        return Err(Error::Data(format!(
            "a grid needs exactly 2 swept parameters, plan has {}",
            specs.len()
        )));
    }
    let axis = |name: &str| {
        specs
            .iter()
            .find(|s| s.name() == name)
            .map(enumerate_values)
            .ok_or_else(|| Error::Data(format!("`{name}` is not a swept parameter")))
    };
    if x_param == y_param {
        return Err(Error::Data("grid axes must differ".into()));
    }
    let x_values = axis(x_param)?;
    let y_values = axis(y_param)?;

    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; x_values.len()]; y_values.len()];
    for s in summaries {
        let position = |name: &str, values: &[Scalar]| {
            s.assignment
                .get(name)
                .and_then(|v| values.iter().position(|a| a == v))
        };
        let (Some(xi), Some(yi)) = (position(x_param, &x_values), position(y_param, &y_values))
        else {
            return Err(Error::Data(format!(
                "point {} {} is outside the grid",
                s.point_index, s.assignment
            )));
        };
        cells[yi][xi] = Some(indicator.value(s));
    }

    let mut absent = Vec::new();
    for (yi, row) in cells.iter().enumerate() {
        for (xi, cell) in row.iter().enumerate() {
            if cell.is_none() {
                absent.push(format!(
                    "{{{x_param}={}, {y_param}={}}}",
                    x_values[xi], y_values[yi]
                ));
            }
        }
    }
    if !absent.is_empty() {
        return Err(Error::Data(format!(
            "grid cells without data: {}",
            absent.join(", ")
        )));
    }

    Ok(GridSummary {
        indicator,
        x_param: x_param.to_string(),
        y_param: y_param.to_string(),
        x_values,
        y_values,
        cells: cells
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.expect("checked")).collect())
            .collect(),
    })
}

/// Removes stale temporary files left by an interrupted run.
pub fn clean_partial_outputs(results_dir: &Path) -> Result<usize> {
    let mut removed = 0;
    let entries = match fs::read_dir(results_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(Error::io(results_dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(results_dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with(".task-") && name.ends_with(".tmp") {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            removed += 1;
        }
    }
    Ok(removed)
}
