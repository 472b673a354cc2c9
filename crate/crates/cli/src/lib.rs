//! The `softgrad` command-line harness.
//!
//! ```text
//! softgrad run --config run.toml [--task ID] [--method NAME] [--seeds 1,2,3]
//!              [--out DIR] [--precision single|double] [--workers N]
//! softgrad gradcheck --task push_rope|all [--steps N] [--tolerance 1e-4] [--out DIR]
//! softgrad export RECORD --frames 0..5 --out DIR
//! softgrad catalog
//! ```
//!
//! Exit codes: 0 success, 1 failed run or tolerance breach, 2 usage or
//! config error.

pub mod config;
pub mod error;
pub mod export;
pub mod gradcheck;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use softgrad_core::Precision;
use softgrad_envs::TaskId;

pub use config::{FileConfig, FlagOverrides, Method, RunConfig};
pub use error::{CliError, CliResult};
pub use export::cmd_export;
pub use gradcheck::{cmd_gradcheck, GradcheckOptions};
pub use run::{cmd_run, ReportSummary, TrajectoryRecord};

#[derive(Parser, Debug)]
#[command(name = "softgrad", version, about = "Differentiable deformable-object manipulation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a method on a task over a list of seeds.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        method: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        precision: Option<Precision>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare analytic gradients with finite differences (double precision).
    Gradcheck {
        /// Task id, or `all`.
        #[arg(long)]
        task: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        adjoint_fault: Option<f64>,
    },
    /// Write per-frame particle snapshots referenced by a record file.
    Export {
        record: PathBuf,
        /// Inclusive range `A..B`, or `all`.
        #[arg(long, default_value = "all")]
        frames: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the task catalog as JSON.
    Catalog,
}

/// Prints a line to stdout, ignoring a closed pipe.
pub(crate) fn say(line: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, task, method, seeds, out, precision, workers } => {
            let file = match config {
                Some(p) => config::parse_file(&p)?,
                None => FileConfig::default(),
            };
            let cfg = RunConfig::resolve(file, FlagOverrides { task, method, seeds, out, precision, workers })?;
            let s = cmd_run(&cfg)?;
            say(format!("{} {} over {} seeds: {:.4} ± {:.4}", s.task, s.method, s.n_seeds, s.mean, s.standard_error));
            Ok(())
        }
        Command::Gradcheck { task, steps, tolerance, eps, seed, out, adjoint_fault } => {
            let tasks = if task == "all" {
                TaskId::ALL.to_vec()
            } else {
                vec![task.parse::<TaskId>().map_err(|e| CliError::Usage(e.to_string()))?]
            };
            if !(tolerance > 0.0) {
                return Err(CliError::Usage("tolerance must be positive".into()));
            }
            let opts = GradcheckOptions { steps, eps, seed, adjoint_fault };
            cmd_gradcheck(&tasks, tolerance, &opts, out.as_deref()).map(|_| ())
        }
        Command::Export { record, frames, out } => {
            let frames = export::parse_frames(&frames).map_err(CliError::Usage)?;
            let files = cmd_export(&record, frames, &out)?;
            say(format!("wrote {} frames to {}", files.len(), out.display()));
            Ok(())
        }
        Command::Catalog => {
            say(serde_json::to_string_pretty(&softgrad_envs::catalog()).expect("catalog serializes"));
            Ok(())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
