use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The eight exported epidemic indicators, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Indicator {
    Susceptible,
    Recovered,
    Presymptomatic,
    Asymptomatic,
    Symptomatic,
    Hospitalized,
    Icu,
    Deaths,
}

impl Indicator {
    pub const ALL: [Indicator; 8] = [
        Indicator::Susceptible,
        Indicator::Recovered,
        Indicator::Presymptomatic,
        Indicator::Asymptomatic,
        Indicator::Symptomatic,
        Indicator::Hospitalized,
        Indicator::Icu,
        Indicator::Deaths,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Susceptible => "susceptible",
            Indicator::Recovered => "recovered",
            Indicator::Presymptomatic => "presymptomatic",
            Indicator::Asymptomatic => "asymptomatic",
            Indicator::Symptomatic => "symptomatic",
            Indicator::Hospitalized => "hospitalized",
            Indicator::Icu => "icu",
            Indicator::Deaths => "deaths",
        }
    }

    pub fn from_name(name: &str) -> Option<Indicator> {
        Indicator::ALL.into_iter().find(|i| i.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const TRAJECTORY_HEADER: &str =
    "step,susceptible,recovered,presymptomatic,asymptomatic,symptomatic,hospitalized,icu,deaths";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Row {
    pub step: u64,
    pub values: [u64; 8],
}

impl Row {
    pub fn get(&self, indicator: Indicator) -> u64 {
        self.values[indicator.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub task_id: u64,
    pub rows: Vec<Row>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn series(&self, indicator: Indicator) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(move |r| r.get(indicator))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.rows.len() + 1));
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}", row.step);
            for v in row.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn trajectory_file_name(task_id: u64) -> String {
    format!("task-{task_id}.csv")
}

/// Task id encoded in a `task-<id>.csv` file name.
pub fn task_id_from_file_name(name: &str) -> Option<u64> {
    name.strip_prefix("task-")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

/// Strict parse: exact header, LF endings, a trailing newline, nine unsigned
/// fields per row and consecutive steps from 0.
pub fn parse_trajectory_csv(text: &str, task_id: u64) -> Result<Trajectory> {
    const CTX: &str = "trajectory csv";
    if text.contains('\r') {
        return Err(Error::format(0, CTX, "CR line endings are not allowed"));
    }
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| Error::format(0, CTX, "missing trailing newline"))?;
    let mut lines = body.split('\n');
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(Error::format(1, CTX, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let mut fields = line.split(',');
        let mut next = || -> Result<u64> {
            let f = fields
                .next()
                .ok_or_else(|| Error::format(line_no, CTX, "too few fields"))?;
            // `u64::from_str` accepts a leading '+'; the format does not.
            if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::format(line_no, CTX, format!("invalid count `{f}`")));
            }
            f.parse()
                .map_err(|_| Error::format(line_no, CTX, format!("invalid count `{f}`")))
        };
        let step = next()?;
        let mut values = [0u64; 8];
        for v in &mut values {
            *v = next()?;
        }
        if fields.next().is_some() {
            return Err(Error::format(line_no, CTX, "too many fields"));
        }
        if step != i as u64 {
            return Err(Error::format(
                line_no,
                CTX,
                format!("expected step {i}, got {step}"),
            ));
        }
        rows.push(Row { step, values });
    }
    if rows.is_empty() {
        return Err(Error::format(1, CTX, "no data rows"));
    }
    Ok(Trajectory { task_id, rows })
}

/// Reads `task-<id>.csv`, taking the task id from the file name.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let task_id = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(task_id_from_file_name)
        .ok_or_else(|| Error::format(0, path.display().to_string(), "not a task-<id>.csv file"))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory_csv(&text, task_id)
}
