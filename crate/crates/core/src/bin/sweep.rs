use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sweepkit::aggregate::GridIndicator;
use sweepkit::config::load_config;
use sweepkit::pipeline::{self, Layout, SlurmOverrides};
use sweepkit::{Error, Result};

/// Plan, run and summarise parameter sweeps of stochastic simulations.
#[derive(Parser, Debug)]
#[command(name = "sweep", version)]
struct Cli {
    /// Sweep configuration (JSON); needed by `plan`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "sweep-out")]
    out: PathBuf,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enumerate the experiment space into chunk files and plan.json.
    Plan,
    /// Run pending tasks on this machine.
    Run {
        #[arg(long, env = "SWEEP_WORKERS")]
        workers: Option<usize>,
        /// `builtin`, or a shell command with `{xml}` and `{outdir}` placeholders.
        #[arg(long)]
        adapter: Option<String>,
        /// Only the tasks of this chunk file.
        #[arg(long)]
        chunk: Option<PathBuf>,
    },
    /// Write a SLURM array-job script over the chunk files.
    Sbatch {
        /// Hours per array task.
        #[arg(long)]
        timeout: Option<u32>,
        /// CPUs per array task.
        #[arg(long)]
        cores: Option<u32>,
        #[arg(long)]
        nodes: Option<u32>,
        /// Array tasks allowed to run at once.
        #[arg(long)]
        max_submission: Option<u32>,
        #[arg(long)]
        adapter: Option<String>,
    },
    /// Submit the script written by `sbatch`.
    Submit,
    /// Summaries, figures and the grid view of a finished run.
    Report {
        #[arg(long, default_value = "deaths")]
        grid_indicator: GridIndicator,
        #[arg(long, env = "SWEEP_WORKERS")]
        workers: Option<usize>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let layout = Layout::new(&cli.out);
    match cli.command {
        Command::Plan => {
            let path = cli
                .config
                .ok_or_else(|| Error::config("--config", "required by `plan`"))?;
            let config = load_config(&path)?;
            let out = pipeline::cmd_plan(&config, &layout)?;
            println!(
                "points={} tasks={} chunks={}",
                out.points, out.tasks, out.chunks
            );
        }
        Command::Run {
            workers,
            adapter,
            chunk,
        } => {
            let workers = workers.unwrap_or_else(default_workers);
            let out = pipeline::cmd_run(&layout, workers, adapter.as_deref(), chunk.as_deref())?;
            let r = &out.report;
            println!(
                "tasks={} skipped={} succeeded={} failed={} seconds={:.1}",
                r.tasks_total,
                out.skipped,
                r.tasks_succeeded,
                r.tasks_failed,
                r.wall_clock.as_secs_f64()
            );
            for f in &r.failures {
                eprintln!("task {} failed: {}", f.task_id, f.reason);
            }
            if r.tasks_failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sbatch {
            timeout,
            cores,
            nodes,
            max_submission,
            adapter,
        } => {
            let overrides = SlurmOverrides {
                timeout_hours: timeout,
                cores,
                nodes,
                max_submission,
            };
            let exe = std::env::current_exe()
                .map_err(|e| Error::Environment(format!("cannot locate this executable: {e}")))?;
            let files = pipeline::cmd_sbatch(
                &layout,
                &overrides,
                adapter.as_deref(),
                &exe.to_string_lossy(),
            )?;
            println!("script={}", files.script.display());
            println!("manifest={}", files.manifest.display());
            println!("chunks={}", files.chunk_count);
        }
        Command::Submit => {
            let path = std::env::var_os("PATH").unwrap_or_default();
            let job = pipeline::cmd_submit(&layout, &path)?;
            println!("job={job}");
        }
        Command::Report {
            grid_indicator,
            workers,
        } => {
            let workers = workers.unwrap_or_else(default_workers);
            let out = pipeline::cmd_report(&layout, grid_indicator, workers)?;
            println!(
                "summaries={} figures={}",
                out.summaries.len(),
                out.figures.len()
            );
            if let Some(p) = &out.grid_csv {
                println!("grid={}", p.display());
            }
            if let Some(p) = &out.heatmap {
                println!("heatmap={}", p.display());
            }
            if let Some(n) = &out.notice {
                eprintln!("{n}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
