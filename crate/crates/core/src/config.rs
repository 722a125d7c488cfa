//! Sweep configuration file.
//!
//! One JSON document:
//!
//! ```json
//! {
//!   "exploration": { "experimentName": "desk", "replications": 20, "finalStep": 720 },
//!   "parameters": [ { "name": "basic_viral_release", "min": 0.01, "max": 0.1, "count": 5 } ],
//!   "model": { "population": 500 },
//!   "slurm": { "jobTimeoutHours": 7, "coresPerNode": 36, "nodes": 16,
//!              "maxSubmission": 6, "jobName": "sweep", "workDir": "." }
//! }
//! ```
//!
//! Relative paths (`slurm.workDir`, a non-builtin `exploration.modelSource`)
//! are resolved against the directory holding the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{build_plan, enumerate_values, ExperimentPlan, ExplorationConfig, ParameterSpec};
use crate::refmodel::EpidemicParams;
use crate::slurm::SlurmConfig;

pub const BUILTIN_SOURCE: &str = "builtin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub exploration: ExplorationConfig,
    pub parameters: Vec<ParameterSpec>,
    /// Overrides of the reference model defaults; ignored by external simulators.
    #[serde(default)]
    pub model: EpidemicParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slurm: Option<SlurmConfig>,
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::config(format!("{section}.{field}"), message),
        Error::Plan(message) => Error::config(section, message),
        other => other,
    }
}

impl SweepConfig {
    pub fn uses_builtin_model(&self) -> bool {
        self.exploration.model_source == BUILTIN_SOURCE
    }

    /// Semantic checks beyond the schema; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.exploration
            .validate()
            .map_err(|e| prefixed("exploration", e))?;
        self.model.validate().map_err(|e| prefixed("model", e))?;
        if let Some(slurm) = &self.slurm {
            slurm.validate()?;
        }
        for (i, spec) in self.parameters.iter().enumerate() {
            let field = format!("parameters[{i}]");
            if self.parameters[..i].iter().any(|s| s.name() == spec.name()) {
                return Err(Error::config(
                    format!("{field}.name"),
                    format!("duplicate parameter `{}`", spec.name()),
                ));
            }
            if self.uses_builtin_model() {
                for value in enumerate_values(spec) {
                    let mut p = self.model.clone();
                    p.set(spec.name(), &value)
                        .and_then(|()| p.validate())
                        .map_err(|e| Error::config(&field, e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    pub fn build_plan(&self) -> Result<ExperimentPlan> {
        self.validate()?;
        build_plan(self.exploration.clone(), self.parameters.clone())
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(slurm) = &mut self.slurm {
            if slurm.work_dir.is_relative() {
                slurm.work_dir = normalize(&base.join(&slurm.work_dir));
            }
        }
        let source = Path::new(&self.exploration.model_source);
        if !self.uses_builtin_model() && source.is_relative() {
            self.exploration.model_source =
                normalize(&base.join(source)).to_string_lossy().into_owned();
        }
    }
}

/// Drops `.` components so that `dir/./x` prints as `dir/x`.
fn normalize(p: &Path) -> std::path::PathBuf {
    p.components()
        .filter(|c| !matches!(c, std::path::Component::CurDir))
        .collect()
}

/// Parses and validates a config document. Schema errors carry the JSON path
/// of the offending value as their field.
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: SweepConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." {
            "<root>".to_string()
        } else {
            path
        };
        Error::config(field, inner.to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads a config file, resolving its relative paths against its directory.
pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config(&text)?;
    let base = std::path::absolute(path)
        .map_err(|e| Error::io(path, e))?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    config.resolve_paths(&base);
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"{
        "exploration": { "experimentName": "desk", "replications": 20, "finalStep": 720 },
        "parameters": [
            { "name": "basic_viral_release", "min": 0.01, "max": 0.1, "count": 5 },
            { "name": "basic_viral_decrease", "min": 0.02, "max": 0.2, "count": 5 }
        ],
        "model": { "direct_transmission_prob": 0.0005 }
    }"#;

    fn field_of(text: &str) -> String {
        match parse_config(text).unwrap_err() {
            Error::Config { field, .. } => field,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn desk_config_plans() {
        let c = parse_config(DESK).unwrap();
        assert_eq!(c.model.direct_transmission_prob, 0.0005);
        assert_eq!(c.model.population, EpidemicParams::default().population);
        let plan = c.build_plan().unwrap();
        assert_eq!((plan.point_count(), plan.tasks.len()), (25, 500));
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(
            field_of(&DESK.replace("\"replications\": 20", "\"replications\": 0")),
            "exploration.replications"
        );
        assert_eq!(
            field_of(&DESK.replace("\"replications\": 20", "\"replications\": \"x\"")),
            "exploration.replications"
        );
        assert_eq!(
            field_of(&DESK.replace("\"count\": 5 }\n", "\"count\": 0 }\n")),
            "parameters[1]"
        );
        assert_eq!(
            field_of(&DESK.replace("0.0005", "2.0")),
            "model.direct_transmission_prob"
        );
        assert_eq!(field_of(&DESK.replace("\"model\"", "\"modle\"")), "modle");
        assert_eq!(
            field_of(&DESK.replace("basic_viral_decrease", "no_such_param")),
            "parameters[1]"
        );
    }

    #[test]
    fn swept_values_checked_against_model() {
        let bad = DESK.replace("\"max\": 0.2", "\"max\": 1.5");
        assert_eq!(field_of(&bad), "parameters[1]");
    }

    #[test]
    fn external_model_accepts_any_parameter_name() {
        let text = DESK
            .replace("basic_viral_decrease", "contact_rate")
            .replace(
                "\"finalStep\": 720",
                "\"finalStep\": 720, \"modelSource\": \"models/m.gaml\"",
            );
        let c = parse_config(&text).unwrap();
        assert!(!c.uses_builtin_model());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = DESK.replace(
            "\"model\"",
            r#""slurm": { "jobTimeoutHours": 1, "coresPerNode": 1, "nodes": 1, "maxSubmission": 1, "jobName": "j", "workDir": "./hpc" }, "model""#,
        );
        let path = dir.path().join("sweep.json");
        fs::write(&path, text).unwrap();
        let c = load_config(&path).unwrap();
        let base = std::path::absolute(dir.path()).unwrap();
        assert_eq!(c.slurm.unwrap().work_dir, base.join("hpc"));
    }

    #[test]
    fn malformed_json_is_config_error() {
        assert!(matches!(parse_config("{"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("[]"), Err(Error::Config { .. })));
    }
}
