//! Experiment-space enumeration.
//!
//! A plan is the cartesian product of every swept parameter's values,
//! enumerated row-major in declaration order (the last parameter varies
//! fastest), crossed with the replication indices. Replication `r` uses seed
//! `start_seed + r` at every point, so replications are seed-paired across
//! the grid; a sweep is extended by re-planning with
//! `start_seed + replications`.

mod xml;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub(crate) use xml::escape as escape_markup;
pub use xml::{
    chunk_file_name, parse_chunk_str, parse_chunk_xml, render_chunk_xml, write_chunk_xml,
};

use crate::error::{Error, Result};
use crate::scalar::{Assignment, Scalar};

pub const DEFAULT_TASKS_PER_CHUNK: u64 = 8;

/// Value domain of one swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuous { min: f64, max: f64, count: u64 },
    Discrete { values: Vec<Scalar> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDef", into = "SpecDef")]
pub struct ParameterSpec {
    name: String,
    domain: Domain,
}

/// Wire form of [`ParameterSpec`]: `{name, min, max, count}` or `{name, values}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SpecDef {
    Continuous {
        name: String,
        min: f64,
        max: f64,
        count: u64,
    },
    Discrete {
        name: String,
        values: Vec<Scalar>,
    },
}

impl ParameterSpec {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64, count: u64) -> Result<Self> {
        let name = checked_name(name.into())?;
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::Plan(format!("`{name}`: bounds must be finite")));
        }
        if min > max {
            return Err(Error::Plan(format!("`{name}`: min {min} > max {max}")));
        }
        if count == 0 {
            return Err(Error::Plan(format!("`{name}`: count must be >= 1")));
        }
        Ok(ParameterSpec {
            name,
            domain: Domain::Continuous { min, max, count },
        })
    }

    pub fn discrete(name: impl Into<String>, values: Vec<Scalar>) -> Result<Self> {
        let name = checked_name(name.into())?;
        if values.is_empty() {
            return Err(Error::Plan(format!("`{name}`: no values")));
        }
        for (i, v) in values.iter().enumerate() {
            if let Scalar::Float(f) = v {
                if !f.is_finite() {
                    return Err(Error::Plan(format!("`{name}`: non-finite value")));
                }
            }
            if values[..i].contains(v) {
                return Err(Error::Plan(format!("`{name}`: duplicate value {v}")));
            }
        }
        Ok(ParameterSpec {
            name,
            domain: Domain::Discrete { values },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn cardinality(&self) -> u64 {
        match &self.domain {
            Domain::Continuous { count, .. } => *count,
            Domain::Discrete { values } => values.len() as u64,
        }
    }
}

fn checked_name(name: String) -> Result<String> {
    if name.is_empty() {
        return Err(Error::Plan("parameter name is empty".into()));
    }
    Ok(name)
}

impl TryFrom<SpecDef> for ParameterSpec {
    type Error = Error;

    fn try_from(def: SpecDef) -> Result<Self> {
        match def {
            SpecDef::Continuous {
                name,
                min,
                max,
                count,
            } => ParameterSpec::continuous(name, min, max, count),
            SpecDef::Discrete { name, values } => ParameterSpec::discrete(name, values),
        }
    }
}

impl From<ParameterSpec> for SpecDef {
    fn from(spec: ParameterSpec) -> Self {
        match spec.domain {
            Domain::Continuous { min, max, count } => SpecDef::Continuous {
                name: spec.name,
                min,
                max,
                count,
            },
            Domain::Discrete { values } => SpecDef::Discrete {
                name: spec.name,
                values,
            },
        }
    }
}

/// Values of a spec, in order. Continuous values are computed from the index
/// so both endpoints are exact and no rounding accumulates.
pub fn enumerate_values(spec: &ParameterSpec) -> Vec<Scalar> {
    match spec.domain() {
        Domain::Continuous { min, max, count } => {
            let (min, max, count) = (*min, *max, *count);
            if count == 1 {
                return vec![Scalar::Float(min)];
            }
            let last = count - 1;
            (0..count)
                .map(|i| {
                    let v = if i == last {
                        max
                    } else {
                        min + i as f64 * (max - min) / last as f64
                    };
                    Scalar::Float(v)
                })
                .collect()
        }
        Domain::Discrete { values } => values.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExplorationConfig {
    pub experiment_name: String,
    /// Model location, or `"builtin"` for the reference model.
    #[serde(default = "builtin_source")]
    pub model_source: String,
    pub replications: u64,
    pub final_step: u64,
    #[serde(default)]
    pub start_seed: u64,
    #[serde(default = "default_tasks_per_chunk")]
    pub tasks_per_chunk: u64,
    #[serde(default)]
    pub stop_on_extinction: bool,
}

fn builtin_source() -> String {
    "builtin".to_string()
}

fn default_tasks_per_chunk() -> u64 {
    DEFAULT_TASKS_PER_CHUNK
}

impl ExplorationConfig {
    pub fn new(experiment_name: impl Into<String>, replications: u64, final_step: u64) -> Self {
        ExplorationConfig {
            experiment_name: experiment_name.into(),
            model_source: builtin_source(),
            replications,
            final_step,
            start_seed: 0,
            tasks_per_chunk: DEFAULT_TASKS_PER_CHUNK,
            stop_on_extinction: false,
        }
    }

    /// Checks the counter invariants, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.experiment_name.is_empty() {
            return Err(Error::config("experimentName", "must not be empty"));
        }
        for (field, value) in [
            ("replications", self.replications),
            ("finalStep", self.final_step),
            ("tasksPerChunk", self.tasks_per_chunk),
        ] {
            if value == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTask {
    pub task_id: u64,
    pub point_index: u64,
    pub replication_index: u64,
    pub assignment: Assignment,
    pub seed: u64,
    pub final_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub config: ExplorationConfig,
    pub specs: Vec<ParameterSpec>,
    pub tasks: Vec<SimulationTask>,
}

impl ExperimentPlan {
    pub fn point_count(&self) -> u64 {
        self.specs.iter().map(ParameterSpec::cardinality).product()
    }

    /// Point index owning `task_id`, if the task belongs to this plan.
    pub fn point_of(&self, task_id: u64) -> Option<u64> {
        ((task_id as usize) < self.tasks.len()).then(|| task_id / self.config.replications)
    }

    pub fn point_assignment(&self, point_index: u64) -> Option<&Assignment> {
        let first = point_index.checked_mul(self.config.replications)?;
        self.tasks.get(first as usize).map(|t| &t.assignment)
    }

    /// Tasks of one point, in replication order.
    pub fn point_tasks(&self, point_index: u64) -> &[SimulationTask] {
        let reps = self.config.replications as usize;
        let start = (point_index as usize)
            .saturating_mul(reps)
            .min(self.tasks.len());
        let end = start.saturating_add(reps).min(self.tasks.len());
        &self.tasks[start..end]
    }
}

/// Full experiment space: every parameter combination × every replication.
pub fn build_plan(config: ExplorationConfig, specs: Vec<ParameterSpec>) -> Result<ExperimentPlan> {
    config.validate().map_err(|e| Error::Plan(e.to_string()))?;
    let mut seen = HashSet::new();
    for spec in &specs {
        if !seen.insert(spec.name()) {
            return Err(Error::Plan(format!(
                "duplicate parameter name `{}`",
                spec.name()
            )));
        }
    }

    let axes: Vec<Vec<Scalar>> = specs.iter().map(enumerate_values).collect();
    let points = axes
        .iter()
        .try_fold(1u64, |acc, a| acc.checked_mul(a.len() as u64))
        .ok_or_else(|| Error::Plan("experiment space too large".into()))?;
    let total = points
        .checked_mul(config.replications)
        .filter(|&t| usize::try_from(t).is_ok())
        .ok_or_else(|| Error::Plan("experiment space too large".into()))?;

    let mut tasks = Vec::with_capacity(total as usize);
    let mut digits = vec![0usize; axes.len()];
    for point_index in 0..points {
        let assignment = Assignment(
            specs
                .iter()
                .zip(&axes)
                .zip(&digits)
                .map(|((spec, axis), &d)| (spec.name().to_string(), axis[d].clone()))
                .collect(),
        );
        for replication_index in 0..config.replications {
            tasks.push(SimulationTask {
                task_id: point_index * config.replications + replication_index,
                point_index,
                replication_index,
                assignment: assignment.clone(),
                seed: config.start_seed.wrapping_add(replication_index),
                final_step: config.final_step,
            });
        }
        // Row-major odometer: the last axis turns fastest.
        for (digit, axis) in digits.iter_mut().zip(&axes).rev() {
            *digit += 1;
            if *digit < axis.len() {
                break;
            }
            *digit = 0;
        }
    }

    Ok(ExperimentPlan {
        config,
        specs,
        tasks,
    })
}

/// A contiguous batch of tasks serialized to one plan file.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub chunk_id: u64,
    pub experiment: String,
    pub source_path: String,
    pub replications: u64,
    pub tasks: Vec<SimulationTask>,
}

pub fn chunk_count(task_count: u64, tasks_per_chunk: u64) -> u64 {
    task_count.div_ceil(tasks_per_chunk)
}

pub fn chunk_plan(plan: &ExperimentPlan) -> Result<Vec<Chunk>> {
    if plan.tasks.is_empty() {
        return Err(Error::Plan("cannot chunk an empty plan".into()));
    }
    let size = plan.config.tasks_per_chunk as usize;
    if size == 0 {
        return Err(Error::Plan("tasksPerChunk must be >= 1".into()));
    }
    Ok(plan
        .tasks
        .chunks(size)
        .enumerate()
        .map(|(k, tasks)| Chunk {
            chunk_id: k as u64,
            experiment: plan.config.experiment_name.clone(),
            source_path: plan.config.model_source.clone(),
            replications: plan.config.replications,
            tasks: tasks.to_vec(),
        })
        .collect())
}
