//! Subcommand bodies: plan, run, sbatch, submit, report.
//!
//! Everything lives under one output directory:
//!
//! ```text
//! <out>/plan.json            resolved config and counts
//! <out>/plans/plan-<k>.xml   chunk files
//! <out>/results/task-<id>.csv
//! <out>/report/              summaries, figures, grid
//! <out>/slurm/               job.sbatch, chunks.manifest
//! ```

use std::collections::BTreeSet;
use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_points, build_grid, clean_partial_outputs, grid_file_name, summary_file_name,
    GridIndicator,
};
use crate::config::SweepConfig;
use crate::error::{Error, Result};
use crate::plan::{chunk_file_name, chunk_plan, parse_chunk_xml, write_chunk_xml, ExperimentPlan};
use crate::report::{
    export_grid_csv, export_summary_csv, render_heatmap, render_timeseries, write_svg, SvgSize,
};
use crate::runner::{resume, run_local, RunReport, SimulatorAdapter};
use crate::slurm::{
    prepare_sbatch, run_slurm_with_path, ArrayCommand, SbatchFiles, SlurmConfig, MANIFEST_NAME,
    SCRIPT_NAME,
};

pub const PLAN_FILE: &str = "plan.json";

/// Task ids listed in a missing-data error before it is cut short.
const MAX_LISTED: usize = 100;

/// Paths of one output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn plan_file(&self) -> PathBuf {
        self.root.join(PLAN_FILE)
    }
    pub fn plans(&self) -> PathBuf {
        self.root.join("plans")
    }
    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn slurm(&self) -> PathBuf {
        self.root.join("slurm")
    }
}

/// Contents of `plan.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PlanManifest {
    pub config: SweepConfig,
    pub point_count: u64,
    pub task_count: u64,
    pub chunk_count: u64,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads `plan.json` and rebuilds the plan it describes.
pub fn load_plan(layout: &Layout) -> Result<(PlanManifest, ExperimentPlan)> {
    let path = layout.plan_file();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::config(
                "out",
                format!("{} does not exist; run `plan` first", path.display()),
            ))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let manifest: PlanManifest =
        serde_json::from_str(&text).map_err(|e| Error::config(PLAN_FILE, e.to_string()))?;
    let plan = manifest.config.build_plan()?;
    if plan.tasks.len() as u64 != manifest.task_count {
        return Err(Error::config(
            PLAN_FILE,
            "taskCount does not match the plan",
        ));
    }
    Ok((manifest, plan))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub points: u64,
    pub tasks: u64,
    pub chunks: u64,
    pub chunk_files: Vec<PathBuf>,
}

/// Writes `plan.json` and every chunk file. Chunk files left over from an
/// earlier, larger plan are removed.
pub fn cmd_plan(config: &SweepConfig, layout: &Layout) -> Result<PlanOutcome> {
    let plan = config.build_plan()?;
    let chunks = chunk_plan(&plan)?;
    let dir = layout.plans();
    create_dir(&dir)?;

    let keep: BTreeSet<String> = chunks.iter().map(|c| chunk_file_name(c.chunk_id)).collect();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("plan-") && name.ends_with(".xml") && !keep.contains(&name) {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    let chunk_files = chunks
        .iter()
        .map(|c| write_chunk_xml(c, &dir))
        .collect::<Result<Vec<_>>>()?;

    let manifest = PlanManifest {
        config: config.clone(),
        point_count: plan.point_count(),
        task_count: plan.tasks.len() as u64,
        chunk_count: chunks.len() as u64,
    };
    let mut json =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    json.push('\n');
    let path = layout.plan_file();
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    Ok(PlanOutcome {
        points: manifest.point_count,
        tasks: manifest.task_count,
        chunks: manifest.chunk_count,
        chunk_files,
    })
}

/// `builtin` or a command template with `{xml}` and `{outdir}`.
pub fn select_adapter(config: &SweepConfig, choice: Option<&str>) -> Result<SimulatorAdapter> {
    match choice.map(str::trim) {
        None | Some("builtin") => {
            if !config.uses_builtin_model() {
                return Err(Error::config(
                    "adapter",
                    format!(
                        "modelSource is `{}`; pass a command template with --adapter",
                        config.exploration.model_source
                    ),
                ));
            }
            Ok(SimulatorAdapter::Builtin {
                params: config.model.clone(),
            })
        }
        Some(template) => SimulatorAdapter::external(template),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Requested tasks that already had a complete output.
    pub skipped: u64,
}

/// Runs pending tasks, either all of them or those of one chunk file.
pub fn cmd_run(
    layout: &Layout,
    workers: usize,
    adapter: Option<&str>,
    chunk: Option<&Path>,
) -> Result<RunOutcome> {
    let (manifest, plan) = load_plan(layout)?;
    let adapter = select_adapter(&manifest.config, adapter)?;
    let results = layout.results();
    create_dir(&results)?;
    let removed = clean_partial_outputs(&results)?;
    if removed > 0 {
        log::info!("removed {removed} partial output(s)");
    }

    let requested: Vec<u64> = match chunk {
        None => plan.tasks.iter().map(|t| t.task_id).collect(),
        Some(path) => {
            let c = parse_chunk_xml(path)?;
            for t in &c.tasks {
                match plan.tasks.get(t.task_id as usize) {
                    Some(p) if p == t => {}
                    _ => {
                        return Err(Error::Plan(format!(
                            "{}: task {} does not match {PLAN_FILE}",
                            path.display(),
                            t.task_id
                        )))
                    }
                }
            }
            c.tasks.iter().map(|t| t.task_id).collect()
        }
    };
    let wanted: BTreeSet<u64> = requested.iter().copied().collect();
    let pending: Vec<u64> = resume(&plan, &results)
        .into_iter()
        .filter(|id| wanted.contains(id))
        .collect();
    log::info!(
        "{} of {} requested task(s) pending",
        pending.len(),
        requested.len()
    );
    let report = run_local(&plan, &pending, &adapter, workers, &results)?;
    Ok(RunOutcome {
        skipped: (requested.len() - pending.len()) as u64,
        report,
    })
}

/// Command-line overrides of the `slurm` config section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlurmOverrides {
    pub timeout_hours: Option<u32>,
    pub cores: Option<u32>,
    pub nodes: Option<u32>,
    pub max_submission: Option<u32>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

/// Writes the array-job script and chunk manifest into `<out>/slurm`.
pub fn cmd_sbatch(
    layout: &Layout,
    overrides: &SlurmOverrides,
    adapter: Option<&str>,
    executable: &str,
) -> Result<SbatchFiles> {
    let (manifest, _) = load_plan(layout)?;
    let root = absolute(&layout.root)?;
    let mut cfg = manifest
        .config
        .slurm
        .clone()
        .unwrap_or_else(|| SlurmConfig {
            work_dir: root.clone(),
            ..SlurmConfig::default()
        });
    if let Some(v) = overrides.timeout_hours {
        cfg.job_timeout_hours = v;
    }
    if let Some(v) = overrides.cores {
        cfg.cores_per_node = v;
    }
    if let Some(v) = overrides.nodes {
        cfg.nodes = v;
    }
    if let Some(v) = overrides.max_submission {
        cfg.max_submission = v;
    }

    let plans = root.join("plans");
    let mut chunks = Vec::with_capacity(manifest.chunk_count as usize);
    for k in 0..manifest.chunk_count {
        let path = plans.join(chunk_file_name(k));
        if !path.is_file() {
            return Err(Error::config(
                "out",
                format!("{} is missing; run `plan` again", path.display()),
            ));
        }
        chunks.push((k, path));
    }
    let adapter = select_adapter(&manifest.config, adapter)?;
    let command = ArrayCommand::for_adapter(&adapter, executable, &root, &root.join("results"));
    prepare_sbatch(&chunks, &cfg, &command, &layout.slurm())
}

/// Submits the script written by [`cmd_sbatch`]; returns the job id.
pub fn cmd_submit(layout: &Layout, search_path: &OsStr) -> Result<String> {
    let dir = layout.slurm();
    let script = dir.join(SCRIPT_NAME);
    let manifest = absolute(&dir.join(MANIFEST_NAME))?;
    if !script.is_file() || !manifest.is_file() {
        return Err(Error::config(
            "out",
            format!("no job script in {}; run `sbatch` first", dir.display()),
        ));
    }
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let files = SbatchFiles {
        script,
        manifest,
        chunk_count: text.lines().count(),
    };
    run_slurm_with_path(&files, search_path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub summaries: Vec<PathBuf>,
    pub figures: Vec<PathBuf>,
    pub grid_csv: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
    /// Why the grid was not produced, when it was not.
    pub notice: Option<String>,
}

pub fn timeseries_file_name(point_index: u64) -> String {
    format!("point-{point_index}-timeseries.svg")
}

pub fn heatmap_file_name(indicator: GridIndicator) -> String {
    format!("heatmap-{indicator}.svg")
}

fn incomplete_error(ids: &[u64]) -> Error {
    let listed: Vec<String> = ids.iter().take(MAX_LISTED).map(u64::to_string).collect();
    let more = if ids.len() > MAX_LISTED {
        format!(" and {} more", ids.len() - MAX_LISTED)
    } else {
        String::new()
    };
    Error::Data(format!(
        "{} task output(s) missing or incomplete, taskIds: {}{more}",
        ids.len(),
        listed.join(", ")
    ))
}

/// Aggregates every point and renders the figures. Refuses to run on an
/// incomplete result set.
pub fn cmd_report(
    layout: &Layout,
    indicator: GridIndicator,
    workers: usize,
) -> Result<ReportOutcome> {
    let (manifest, plan) = load_plan(layout)?;
    let results = layout.results();
    let pending = resume(&plan, &results);
    if !pending.is_empty() {
        return Err(incomplete_error(&pending));
    }
    let dir = layout.report();
    create_dir(&dir)?;

    let points = aggregate_points(&plan, &results, workers.max(1))?;
    let experiment = &manifest.config.exploration.experiment_name;
    let mut out = ReportOutcome {
        summaries: Vec::with_capacity(points.len()),
        figures: Vec::with_capacity(points.len()),
        grid_csv: None,
        heatmap: None,
        notice: None,
    };
    for (summary, _) in &points {
        let i = summary.point_index;
        out.summaries.push(export_summary_csv(
            summary,
            &dir.join(summary_file_name(i)),
        )?);
        let title = format!(
            "{experiment}: point {i} {} ({} replications)",
            summary.assignment, summary.replication_count
        );
        let svg = render_timeseries(summary, &title, SvgSize::TIMESERIES);
        out.figures
            .push(write_svg(&svg, &dir.join(timeseries_file_name(i)))?);
    }

    if plan.specs.len() == 2 {
        let scalars: Vec<_> = points.into_iter().map(|(_, s)| s).collect();
        let grid = build_grid(
            &plan.specs,
            &scalars,
            plan.specs[0].name(),
            plan.specs[1].name(),
            indicator,
        )?;
        out.grid_csv = Some(export_grid_csv(
            &grid,
            &dir.join(grid_file_name(indicator)),
        )?);
        let title = format!("{experiment}: {}", indicator.label());
        let svg = render_heatmap(&grid, &title, SvgSize::HEATMAP);
        out.heatmap = Some(write_svg(&svg, &dir.join(heatmap_file_name(indicator)))?);
    } else {
        out.notice = Some(format!(
            "heatmap skipped: a grid needs exactly 2 swept parameters, the plan has {}",
            plan.specs.len()
        ));
    }
    Ok(out)
}
