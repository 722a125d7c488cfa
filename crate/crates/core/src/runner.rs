//! Local execution of plan tasks.
//!
//! Builtin tasks run one per worker. External simulators are invoked once
//! per chunk with a plan file holding only the pending tasks of that chunk;
//! they write into a private staging directory and each valid trajectory is
//! then renamed into the output directory. Every output file therefore
//! appears atomically, which is what `resume` relies on.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::plan::{render_chunk_xml, Chunk, ExperimentPlan, SimulationTask};
use crate::pool::map_bounded;
use crate::refmodel::{self, parse_trajectory_csv, trajectory_file_name, EpidemicParams};

const STAGING_DIR: &str = ".staging";

#[derive(Debug, Clone, PartialEq)]
pub enum SimulatorAdapter {
    Builtin {
        params: EpidemicParams,
    },
    /// Shell command with `{xml}` and `{outdir}` placeholders.
    External {
        command_template: String,
    },
}

impl SimulatorAdapter {
    pub fn external(command_template: impl Into<String>) -> Result<Self> {
        let adapter = SimulatorAdapter::External {
            command_template: command_template.into(),
        };
        adapter.validate()?;
        Ok(adapter)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimulatorAdapter::Builtin { params } => params.validate(),
            SimulatorAdapter::External { command_template } => {
                for placeholder in ["{xml}", "{outdir}"] {
                    if !command_template.contains(placeholder) {
                        return Err(Error::config(
                            "adapter",
                            format!("command template lacks `{placeholder}`"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFailure {
    pub task_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub tasks_total: u64,
    pub tasks_succeeded: u64,
    pub tasks_failed: u64,
    pub failures: Vec<TaskFailure>,
    pub wall_clock: Duration,
}

/// True when `path` holds a complete, parseable trajectory for `task`.
pub fn is_complete(path: &Path, task: &SimulationTask, stop_on_extinction: bool) -> bool {
    let Ok(text) = fs::read_to_string(path) else {
        return false;
    };
    check_trajectory(&text, task, stop_on_extinction).is_ok()
}

fn check_trajectory(text: &str, task: &SimulationTask, stop_on_extinction: bool) -> Result<()> {
    let t = parse_trajectory_csv(text, task.task_id)?;
    let n = t.len() as u64;
    if n > task.final_step || (!stop_on_extinction && n != task.final_step) {
        return Err(Error::Data(format!(
            "task {}: {n} rows for finalStep {}",
            task.task_id, task.final_step
        )));
    }
    Ok(())
}

/// Task ids in `plan` that have no complete output in `out_dir`.
pub fn resume(plan: &ExperimentPlan, out_dir: &Path) -> Vec<u64> {
    let stop = plan.config.stop_on_extinction;
    plan.tasks
        .iter()
        .filter(|t| !is_complete(&out_dir.join(trajectory_file_name(t.task_id)), t, stop))
        .map(|t| t.task_id)
        .collect()
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

type Outcome = Vec<(u64, std::result::Result<(), String>)>;

struct Executor<'a> {
    plan: &'a ExperimentPlan,
    adapter: &'a SimulatorAdapter,
    out_dir: &'a Path,
    /// Resolved per-point model parameters (builtin only).
    point_params: BTreeMap<u64, EpidemicParams>,
}

impl Executor<'_> {
    fn run_unit(&self, tasks: &[&SimulationTask]) -> Outcome {
        match self.adapter {
            SimulatorAdapter::Builtin { .. } => tasks
                .iter()
                .map(|t| (t.task_id, self.run_builtin(t).map_err(|e| e.to_string())))
                .collect(),
            SimulatorAdapter::External { command_template } => {
                self.run_external(command_template, tasks)
            }
        }
    }

    fn run_builtin(&self, task: &SimulationTask) -> Result<()> {
        let params = &self.point_params[&task.point_index];
        let mut t = refmodel::run_simulation(
            params,
            task.seed,
            task.final_step,
            self.plan.config.stop_on_extinction,
        )?;
        t.task_id = task.task_id;
        write_atomic(
            self.out_dir,
            &trajectory_file_name(task.task_id),
            &t.to_csv(),
        )
    }

    fn run_external(&self, template: &str, tasks: &[&SimulationTask]) -> Outcome {
        let fail_all = |reason: String| -> Outcome {
            tasks
                .iter()
                .map(|t| (t.task_id, Err(reason.clone())))
                .collect()
        };
        let chunk_id = tasks[0].task_id / self.plan.config.tasks_per_chunk;
        let staging = self
            .out_dir
            .join(STAGING_DIR)
            .join(format!("chunk-{chunk_id}"));
        let sim_out = staging.join("out");
        let _ = fs::remove_dir_all(&staging);
        if let Err(e) = fs::create_dir_all(&sim_out) {
            return fail_all(format!("cannot create {}: {e}", sim_out.display()));
        }
        let chunk = Chunk {
            chunk_id,
            experiment: self.plan.config.experiment_name.clone(),
            source_path: self.plan.config.model_source.clone(),
            replications: self.plan.config.replications,
            tasks: tasks.iter().map(|&t| t.clone()).collect(),
        };
        let xml = staging.join(format!("plan-{chunk_id}.xml"));
        if let Err(e) = fs::write(&xml, render_chunk_xml(&chunk)) {
            return fail_all(format!("cannot write {}: {e}", xml.display()));
        }
        let command = template
            .replace("{xml}", &shell_quote(&xml.to_string_lossy()))
            .replace("{outdir}", &shell_quote(&sim_out.to_string_lossy()));
        log::debug!("chunk {chunk_id}: {command}");
        let output = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .output();
        let outcome = match output {
            Err(e) => fail_all(format!("cannot spawn shell: {e}")),
            Ok(out) if !out.status.success() => {
                let stderr = String::from_utf8_lossy(&out.stderr);
                let tail: String = stderr
                    .trim()
                    .chars()
                    .rev()
                    .take(400)
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .collect();
                fail_all(format!("simulator exited with {}: {tail}", out.status))
            }
            Ok(_) => tasks
                .iter()
                .map(|t| (t.task_id, self.collect(&sim_out, t)))
                .collect(),
        };
        let _ = fs::remove_dir_all(&staging);
        outcome
    }

    fn collect(&self, sim_out: &Path, task: &SimulationTask) -> std::result::Result<(), String> {
        let name = trajectory_file_name(task.task_id);
        let src = sim_out.join(&name);
        let text = fs::read_to_string(&src).map_err(|e| format!("missing output {name}: {e}"))?;
        check_trajectory(&text, task, self.plan.config.stop_on_extinction)
            .map_err(|e| format!("malformed output {name}: {e}"))?;
        write_atomic(self.out_dir, &name, &text).map_err(|e| e.to_string())
    }
}

/// Builtin tasks run alone; external tasks are batched by chunk.
fn work_units(
    tasks: Vec<&SimulationTask>,
    by_chunk: bool,
    tasks_per_chunk: u64,
) -> Vec<Vec<&SimulationTask>> {
    if !by_chunk {
        return tasks.into_iter().map(|t| vec![t]).collect();
    }
    let mut chunks: BTreeMap<u64, Vec<&SimulationTask>> = BTreeMap::new();
    for t in tasks {
        chunks
            .entry(t.task_id / tasks_per_chunk)
            .or_default()
            .push(t);
    }
    chunks.into_values().collect()
}

/// Executes `task_ids` of `plan` with at most `workers` units in flight.
/// Failed tasks are retried once, then reported; they never abort the run.
pub fn run_local<'a>(
    plan: &'a ExperimentPlan,
    task_ids: &[u64],
    adapter: &SimulatorAdapter,
    workers: usize,
    out_dir: &Path,
) -> Result<RunReport> {
    let started = Instant::now();
    if workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    adapter.validate()?;
    let mut tasks = Vec::with_capacity(task_ids.len());
    for &id in task_ids {
        let task = plan
            .tasks
            .get(id as usize)
            .filter(|t| t.task_id == id)
            .ok_or_else(|| Error::Plan(format!("task {id} is not in the plan")))?;
        tasks.push(task);
    }

    let mut point_params = BTreeMap::new();
    if let SimulatorAdapter::Builtin { params } = adapter {
        for t in &tasks {
            if let std::collections::btree_map::Entry::Vacant(slot) =
                point_params.entry(t.point_index)
            {
                slot.insert(params.with_assignment(&t.assignment)?);
            }
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let probe = out_dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(out_dir, e))?;
    let _ = fs::remove_file(&probe);

    let exec = Executor {
        plan,
        adapter,
        out_dir,
        point_params,
    };
    let per_chunk = plan.config.tasks_per_chunk;
    let external = matches!(adapter, SimulatorAdapter::External { .. });
    let group = |tasks: Vec<&'a SimulationTask>| work_units(tasks, external, per_chunk);

    let first: Outcome = map_bounded(&group(tasks.clone()), workers, |u| exec.run_unit(u))
        .into_iter()
        .flatten()
        .collect();
    let mut results: BTreeMap<u64, std::result::Result<(), String>> = first.into_iter().collect();
    let retry: Vec<&SimulationTask> = tasks
        .iter()
        .copied()
        .filter(|t| results[&t.task_id].is_err())
        .collect();
    if !retry.is_empty() {
        log::warn!("retrying {} failed task(s)", retry.len());
        for unit in map_bounded(&group(retry), workers, |u| exec.run_unit(u)) {
            results.extend(unit);
        }
    }
    let _ = fs::remove_dir(out_dir.join(STAGING_DIR));

    let failures: Vec<TaskFailure> = results
        .into_iter()
        .filter_map(|(task_id, r)| r.err().map(|reason| TaskFailure { task_id, reason }))
        .collect();
    let total = tasks.len() as u64;
    Ok(RunReport {
        tasks_total: total,
        tasks_succeeded: total - failures.len() as u64,
        tasks_failed: failures.len() as u64,
        failures,
        wall_clock: started.elapsed(),
    })
}

/// Output paths of every task of `plan` under `out_dir`.
pub fn output_paths(plan: &ExperimentPlan, out_dir: &Path) -> Vec<PathBuf> {
    plan.tasks
        .iter()
        .map(|t| out_dir.join(trajectory_file_name(t.task_id)))
        .collect()
}
