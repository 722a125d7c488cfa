//! SLURM array-job generation and submission.
//!
//! One array job covers the whole plan: array index `k` reads line `k + 1`
//! of `chunks.manifest` to find its plan file. `maxSubmission` becomes the
//! array throttle (`%N`), so the scheduler caps concurrent chunks.

use std::ffi::{OsStr, OsString};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::SimulatorAdapter;

pub const SCRIPT_NAME: &str = "job.sbatch";
pub const MANIFEST_NAME: &str = "chunks.manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SlurmConfig {
    pub job_timeout_hours: u32,
    pub cores_per_node: u32,
    pub nodes: u32,
    pub max_submission: u32,
    pub job_name: String,
    /// Job working directory; `logs/` is created under it.
    pub work_dir: PathBuf,
    /// Extra header lines, written verbatim after the generated directives.
    #[serde(default)]
    pub extra_directives: Vec<String>,
}

impl Default for SlurmConfig {
    fn default() -> Self {
        SlurmConfig {
            job_timeout_hours: 1,
            cores_per_node: 1,
            nodes: 1,
            max_submission: 1,
            job_name: "sweep".into(),
            work_dir: PathBuf::from("."),
            extra_directives: Vec::new(),
        }
    }
}

impl SlurmConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("jobTimeoutHours", self.job_timeout_hours),
            ("coresPerNode", self.cores_per_node),
            ("nodes", self.nodes),
            ("maxSubmission", self.max_submission),
        ] {
            if v == 0 {
                return Err(Error::config(format!("slurm.{field}"), "must be >= 1"));
            }
        }
        if self.job_name.is_empty() || self.job_name.chars().any(char::is_whitespace) {
            return Err(Error::config(
                "slurm.jobName",
                "must be a non-empty identifier",
            ));
        }
        if let Some(bad) = self.extra_directives.iter().find(|d| d.contains('\n')) {
            return Err(Error::config(
                "slurm.extraDirectives",
                format!("directive spans lines: {bad:?}"),
            ));
        }
        Ok(())
    }
}

/// `HH:00:00`, zero-padded to two digits.
pub fn format_time_limit(hours: u32) -> String {
    format!("{hours:02}:00:00")
}

pub fn array_spec(chunk_count: usize, max_submission: u32) -> String {
    format!("0-{}%{max_submission}", chunk_count.saturating_sub(1))
}

/// What each array task executes once it has resolved `$XML`.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayCommand {
    /// Re-enter this tool on one chunk: `<exe> --out <dir> run --chunk $XML`.
    Builtin {
        executable: String,
        out_dir: PathBuf,
    },
    /// External simulator template; `{outdir}` becomes `results_dir`.
    External {
        template: String,
        results_dir: PathBuf,
    },
}

impl ArrayCommand {
    pub fn for_adapter(
        adapter: &SimulatorAdapter,
        executable: impl Into<String>,
        out_dir: &Path,
        results_dir: &Path,
    ) -> Self {
        match adapter {
            SimulatorAdapter::Builtin { .. } => ArrayCommand::Builtin {
                executable: executable.into(),
                out_dir: out_dir.to_path_buf(),
            },
            SimulatorAdapter::External { command_template } => ArrayCommand::External {
                template: command_template.clone(),
                results_dir: results_dir.to_path_buf(),
            },
        }
    }

    fn render(&self) -> String {
        match self {
            ArrayCommand::Builtin {
                executable,
                out_dir,
            } => format!(
                "{} --out {} run --chunk \"$XML\" --workers \"${{SLURM_CPUS_PER_TASK:-1}}\"",
                shell_quote(executable),
                shell_quote(&out_dir.to_string_lossy())
            ),
            ArrayCommand::External {
                template,
                results_dir,
            } => template
                .replace("{xml}", "\"$XML\"")
                .replace("{outdir}", &shell_quote(&results_dir.to_string_lossy())),
        }
    }
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"/._-+=:,".contains(&b))
    {
        return s.to_string();
    }
    format!("'{}'", s.replace('\'', "'\\''"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbatchFiles {
    pub script: PathBuf,
    pub manifest: PathBuf,
    pub chunk_count: usize,
}

pub fn render_manifest(chunks: &[(u64, PathBuf)]) -> String {
    let mut out = String::new();
    for (id, path) in chunks {
        let _ = writeln!(out, "{id}\t{}", path.display());
    }
    out
}

pub fn render_script(
    chunk_count: usize,
    config: &SlurmConfig,
    manifest: &Path,
    command: &ArrayCommand,
) -> String {
    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    let _ = writeln!(s, "#SBATCH --job-name={}", config.job_name);
    let _ = writeln!(
        s,
        "#SBATCH --array={}",
        array_spec(chunk_count, config.max_submission)
    );
    let _ = writeln!(
        s,
        "#SBATCH --time={}",
        format_time_limit(config.job_timeout_hours)
    );
    let _ = writeln!(s, "#SBATCH --nodes={}", config.nodes);
    let _ = writeln!(s, "#SBATCH --cpus-per-task={}", config.cores_per_node);
    s.push_str("#SBATCH --output=logs/%A_%a.out\n");
    let _ = writeln!(s, "#SBATCH --chdir={}", config.work_dir.display());
    for line in &config.extra_directives {
        s.push_str(line);
        s.push('\n');
    }
    s.push('\n');
    s.push_str("set -eu\n\n");
    let _ = writeln!(s, "MANIFEST={}", shell_quote(&manifest.to_string_lossy()));
    s.push_str("LINE=$(sed -n \"$((SLURM_ARRAY_TASK_ID + 1))p\" \"$MANIFEST\")\n");
    s.push_str("if [ -z \"$LINE\" ]; then\n");
    s.push_str("    echo \"no manifest entry for array index $SLURM_ARRAY_TASK_ID\" >&2\n");
    s.push_str("    exit 1\n");
    s.push_str("fi\n");
    s.push_str("XML=$(printf '%s\\n' \"$LINE\" | cut -f2)\n\n");
    s.push_str(&command.render());
    s.push('\n');
    s
}

/// Writes `chunks.manifest` and `job.sbatch` into `dir`, plus `logs/` under
/// the job working directory. Touches nothing outside the file system.
pub fn prepare_sbatch(
    chunks: &[(u64, PathBuf)],
    config: &SlurmConfig,
    command: &ArrayCommand,
    dir: &Path,
) -> Result<SbatchFiles> {
    if chunks.is_empty() {
        return Err(Error::Plan("no chunks to schedule".into()));
    }
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let logs = config.work_dir.join("logs");
    fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;

    let manifest = std::path::absolute(dir.join(MANIFEST_NAME))
        .map_err(|e| Error::io(dir.join(MANIFEST_NAME), e))?;
    fs::write(&manifest, render_manifest(chunks)).map_err(|e| Error::io(&manifest, e))?;
    let script = dir.join(SCRIPT_NAME);
    fs::write(
        &script,
        render_script(chunks.len(), config, &manifest, command),
    )
    .map_err(|e| Error::io(&script, e))?;
    Ok(SbatchFiles {
        script,
        manifest,
        chunk_count: chunks.len(),
    })
}

fn find_executable(name: &str, search_path: &OsStr) -> Option<PathBuf> {
    std::env::split_paths(search_path)
        .map(|d| d.join(name))
        .find(|p| is_executable(p))
}

#[cfg(unix)]
fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(p)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(p: &Path) -> bool {
    p.is_file()
}

/// Job id from `sbatch` output: `Submitted batch job <id>` or the
/// `--parsable` form `<id>[;cluster]`.
pub fn parse_job_id(stdout: &str) -> Option<String> {
    let line = stdout.lines().map(str::trim).find(|l| !l.is_empty())?;
    let id = match line.strip_prefix("Submitted batch job ") {
        Some(rest) => rest.split_whitespace().next()?,
        None => line.split(';').next()?,
    };
    (!id.is_empty() && !id.contains(char::is_whitespace)).then(|| id.to_string())
}

/// Submits `job.sbatch` with `sbatch` found on `PATH`.
pub fn run_slurm(files: &SbatchFiles) -> Result<String> {
    let path = std::env::var_os("PATH").unwrap_or_default();
    run_slurm_with_path(files, &path)
}

pub fn run_slurm_with_path(files: &SbatchFiles, search_path: &OsStr) -> Result<String> {
    let sbatch = find_executable("sbatch", search_path)
        .ok_or_else(|| Error::Environment("`sbatch` not found on PATH".into()))?;
    let script: OsString = std::path::absolute(&files.script)
        .map_err(|e| Error::io(&files.script, e))?
        .into_os_string();
    let out = Command::new(&sbatch)
        .arg(&script)
        .output()
        .map_err(|e| Error::Environment(format!("cannot run {}: {e}", sbatch.display())))?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    if !out.status.success() {
        return Err(Error::Submit(format!(
            "sbatch exited with {}: {}{}",
            out.status,
            stderr.trim(),
            stdout.trim()
        )));
    }
    parse_job_id(&stdout)
        .ok_or_else(|| Error::Submit(format!("unrecognised sbatch output: {}", stdout.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cluster_config(work_dir: &Path) -> SlurmConfig {
        SlurmConfig {
            job_timeout_hours: 7,
            cores_per_node: 36,
            nodes: 16,
            max_submission: 6,
            job_name: "env".into(),
            work_dir: work_dir.to_path_buf(),
            extra_directives: vec!["#SBATCH --partition=cn".into()],
        }
    }

    fn chunks(n: u64) -> Vec<(u64, PathBuf)> {
        (0..n)
            .map(|k| (k, PathBuf::from(format!("/plans/plan-{k}.xml"))))
            .collect()
    }

    fn builtin_cmd() -> ArrayCommand {
        ArrayCommand::Builtin {
            executable: "sweep".into(),
            out_dir: PathBuf::from("/runs/env"),
        }
    }

    #[test]
    fn time_limits() {
        assert_eq!(format_time_limit(7), "07:00:00");
        assert_eq!(format_time_limit(1), "01:00:00");
        assert_eq!(format_time_limit(99), "99:00:00");
        for h in 1..=99 {
            let t = format_time_limit(h);
            assert_eq!(t.len(), 8);
            assert_eq!(t[..2].parse::<u32>().unwrap(), h);
        }
    }

    #[test]
    fn cluster_sample_script() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cluster_config(dir.path());
        let files = prepare_sbatch(&chunks(13), &cfg, &builtin_cmd(), dir.path()).unwrap();
        let script = fs::read_to_string(&files.script).unwrap();
        assert!(script.contains("#SBATCH --array=0-12%6\n"));
        assert!(script.contains("#SBATCH --time=07:00:00\n"));
        assert!(script.contains("#SBATCH --cpus-per-task=36\n"));
        assert!(script.contains("#SBATCH --nodes=16\n"));
        assert!(script.contains("#SBATCH --output=logs/%A_%a.out\n"));
        assert!(script.contains("#SBATCH --partition=cn\n"));
        assert!(script.contains("sweep --out /runs/env run --chunk \"$XML\""));
        assert!(dir.path().join("logs").is_dir());
        let manifest = fs::read_to_string(&files.manifest).unwrap();
        assert_eq!(manifest.lines().count(), 13);
        assert_eq!(manifest.lines().nth(12).unwrap(), "12\t/plans/plan-12.xml");

        // byte-deterministic
        prepare_sbatch(&chunks(13), &cfg, &builtin_cmd(), dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&files.script).unwrap(), script);
    }

    #[test]
    fn minimal_script() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SlurmConfig {
            work_dir: dir.path().to_path_buf(),
            ..SlurmConfig::default()
        };
        let files = prepare_sbatch(&chunks(1), &cfg, &builtin_cmd(), dir.path()).unwrap();
        let script = fs::read_to_string(files.script).unwrap();
        assert!(script.contains("--array=0-0%1\n"));
        assert!(script.contains("--time=01:00:00\n"));
    }

    #[test]
    fn external_template_substitution() {
        let cmd = ArrayCommand::External {
            template: "gama-headless.sh -batch {xml} {outdir}".into(),
            results_dir: PathBuf::from("/runs/my results"),
        };
        assert_eq!(
            cmd.render(),
            "gama-headless.sh -batch \"$XML\" '/runs/my results'"
        );
    }

    #[test]
    fn empty_chunk_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            prepare_sbatch(&[], &SlurmConfig::default(), &builtin_cmd(), dir.path()),
            Err(Error::Plan(_))
        ));
    }

    #[test]
    fn zero_counters_rejected() {
        let cfg = SlurmConfig {
            nodes: 0,
            ..SlurmConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn job_id_forms() {
        assert_eq!(
            parse_job_id("Submitted batch job 4242\n").as_deref(),
            Some("4242")
        );
        assert_eq!(parse_job_id("4243;cluster\n").as_deref(), Some("4243"));
        assert_eq!(parse_job_id("").as_deref(), None);
    }

    #[test]
    fn missing_sbatch() {
        let dir = tempfile::tempdir().unwrap();
        let files = SbatchFiles {
            script: dir.path().join(SCRIPT_NAME),
            manifest: dir.path().join(MANIFEST_NAME),
            chunk_count: 1,
        };
        assert!(matches!(
            run_slurm_with_path(&files, dir.path().as_os_str()),
            Err(Error::Environment(_))
        ));
    }

    proptest! {
        #[test]
        fn array_length_matches_manifest(n in 1u64..3000, throttle in 1u32..64) {
            let manifest = render_manifest(&chunks(n));
            let spec = array_spec(n as usize, throttle);
            let (range, limit) = spec.split_once('%').unwrap();
            let (lo, hi) = range.split_once('-').unwrap();
            let len = hi.parse::<u64>().unwrap() - lo.parse::<u64>().unwrap() + 1;
            prop_assert_eq!(len, manifest.lines().count() as u64);
            prop_assert_eq!(limit.parse::<u32>().unwrap(), throttle);
        }
    }
}
