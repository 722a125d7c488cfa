use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "exploration": { "experimentName": "cli", "replications": 3, "finalStep": 48, "tasksPerChunk": 4 },
  "parameters": [
    { "name": "basic_viral_release", "min": 0.01, "max": 0.1, "count": 2 },
    { "name": "basic_viral_decrease", "min": 0.02, "max": 0.2, "count": 2 }
  ],
  "model": { "population": 80, "n_buildings": 8 },
  "slurm": { "jobTimeoutHours": 2, "coresPerNode": 4, "nodes": 1, "maxSubmission": 2,
             "jobName": "cli", "workDir": "hpc" }
}"#;

fn sweep(args: &[&str]) -> Output {
    sweep_env(args, &[])
}

fn sweep_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sweep"));
    cmd.args(args).env_remove("SWEEP_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Fixture {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.json");
        fs::write(&path, config).unwrap();
        let out = dir.path().join("out");
        Fixture {
            config: path,
            out,
            _dir: dir,
        }
    }

    fn out(&self) -> &str {
        self.out.to_str().unwrap()
    }

    fn plan(&self) -> Output {
        sweep(&[
            "--config",
            self.config.to_str().unwrap(),
            "--out",
            self.out(),
            "plan",
        ])
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn plan_prints_counts_and_is_repeatable() {
    let f = Fixture::new(SMALL);
    let o = f.plan();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "points=4 tasks=12 chunks=3");
    let first = snapshot(&f.out.join("plans"));
    let manifest = fs::read(f.out.join("plan.json")).unwrap();
    assert_eq!(code(&f.plan()), 0);
    assert_eq!(snapshot(&f.out.join("plans")), first);
    assert_eq!(fs::read(f.out.join("plan.json")).unwrap(), manifest);
}

#[test]
fn zero_replications_is_a_config_error() {
    let f = Fixture::new(&SMALL.replace("\"replications\": 3", "\"replications\": 0"));
    let o = f.plan();
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("exploration.replications"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn schema_error_names_the_path() {
    let f = Fixture::new(&SMALL.replace("\"count\": 2 }\n  ]", "\"count\": \"two\" }\n  ]"));
    let o = f.plan();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("parameters[1]"), "{}", stderr(&o));
}

#[test]
fn plan_without_config_flag_fails() {
    let f = Fixture::new(SMALL);
    let o = sweep(&["--out", f.out(), "plan"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_without_plan_is_a_config_error() {
    let f = Fixture::new(SMALL);
    let o = sweep(&["--out", f.out(), "run", "--workers", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("plan"));
}

#[test]
fn run_report_and_missing_task() {
    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    let o = sweep_env(&["--out", f.out(), "run"], &[("SWEEP_WORKERS", "2")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("tasks=12 skipped=0 succeeded=12 failed=0"));

    let o = sweep(&["--out", f.out(), "run", "--workers", "2"]);
    assert!(
        stdout(&o).starts_with("tasks=0 skipped=12 "),
        "{}",
        stdout(&o)
    );

    let o = sweep(&[
        "--out",
        f.out(),
        "report",
        "--grid-indicator",
        "peakHospitalized",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = f.out.join("report");
    assert!(report.join("grid-peakHospitalized.csv").is_file());
    assert!(report.join("heatmap-peakHospitalized.svg").is_file());
    assert_eq!(
        fs::read_dir(&report)
            .unwrap()
            .filter(|e| e
                .as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with("-summary.csv"))
            .count(),
        4
    );
    let before = snapshot(&report);
    assert_eq!(
        code(&sweep(&[
            "--out",
            f.out(),
            "report",
            "--grid-indicator",
            "peakHospitalized"
        ])),
        0
    );
    assert_eq!(snapshot(&report), before);

    fs::remove_file(f.out.join("results/task-7.csv")).unwrap();
    let o = sweep(&["--out", f.out(), "report"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("taskIds: 7"), "{}", stderr(&o));
}

#[test]
fn unknown_grid_indicator_is_rejected() {
    let f = Fixture::new(SMALL);
    let o = sweep(&["--out", f.out(), "report", "--grid-indicator", "cases"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failing_adapter_exits_one_and_lists_failures() {
    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    let o = sweep(&[
        "--out",
        f.out(),
        "run",
        "--workers",
        "1",
        "--adapter",
        "exit 1 # {xml} {outdir}",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("failed=12"));
    assert!(stderr(&o).contains("task 0 failed"));
}

#[test]
fn adapter_without_placeholders_is_a_config_error() {
    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    let o = sweep(&["--out", f.out(), "run", "--adapter", "true {xml}"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("{outdir}"));
}

#[test]
fn sbatch_flags_override_config_and_output_is_stable() {
    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    let args = [
        "--out",
        f.out(),
        "sbatch",
        "--timeout",
        "7",
        "--cores",
        "36",
        "--nodes",
        "16",
        "--max-submission",
        "6",
    ];
    let o = sweep(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let script = fs::read_to_string(f.out.join("slurm/job.sbatch")).unwrap();
    for needle in [
        "#SBATCH --array=0-2%6",
        "#SBATCH --time=07:00:00",
        "#SBATCH --nodes=16",
        "#SBATCH --cpus-per-task=36",
        "#SBATCH --job-name=cli",
    ] {
        assert!(script.contains(needle), "missing {needle}\n{script}");
    }
    // workDir resolved against the config file's directory
    let hpc = std::path::absolute(f.config.parent().unwrap().join("hpc")).unwrap();
    assert!(script.contains(&format!("--chdir={}", hpc.display())));
    assert!(hpc.join("logs").is_dir());

    let first = snapshot(&f.out.join("slurm"));
    assert_eq!(code(&sweep(&args)), 0);
    assert_eq!(snapshot(&f.out.join("slurm")), first);
}

#[cfg(unix)]
#[test]
fn submit_uses_sbatch_from_path() {
    use std::os::unix::fs::PermissionsExt;

    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    assert_eq!(code(&sweep(&["--out", f.out(), "sbatch"])), 0);

    let empty = tempfile::tempdir().unwrap();
    let o = sweep_env(
        &["--out", f.out(), "submit"],
        &[("PATH", empty.path().to_str().unwrap())],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("sbatch"));

    let bin = tempfile::tempdir().unwrap();
    let stub = bin.path().join("sbatch");
    fs::write(&stub, "#!/bin/sh\necho \"Submitted batch job 4242\"\n").unwrap();
    fs::set_permissions(&stub, fs::Permissions::from_mode(0o755)).unwrap();
    let o = sweep_env(
        &["--out", f.out(), "submit"],
        &[("PATH", bin.path().to_str().unwrap())],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "job=4242");

    fs::write(
        &stub,
        "#!/bin/sh\necho 'sbatch: error: invalid partition' >&2\nexit 1\n",
    )
    .unwrap();
    let o = sweep_env(
        &["--out", f.out(), "submit"],
        &[("PATH", bin.path().to_str().unwrap())],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("invalid partition"));
}

#[cfg(unix)]
#[test]
fn generated_script_runs_one_chunk() {
    let f = Fixture::new(SMALL);
    assert_eq!(code(&f.plan()), 0);
    assert_eq!(code(&sweep(&["--out", f.out(), "sbatch"])), 0);
    // emulate array index 1 outside SLURM; the --chdir directive is only a comment to sh
    let o = Command::new("sh")
        .arg(f.out.join("slurm/job.sbatch"))
        .env("SLURM_ARRAY_TASK_ID", "1")
        .env("SLURM_CPUS_PER_TASK", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(f.out.join("results"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["task-4.csv", "task-5.csv", "task-6.csv", "task-7.csv"]
    );
}
