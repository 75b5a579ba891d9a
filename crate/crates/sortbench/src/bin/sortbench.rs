use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sortbench::bench::{
    median_error_experiment, median_rows_to_csv, rows_to_csv, run_experiment, select_algorithm,
    Algo, GridConfig, DEFAULT_ALPHA, DEFAULT_BETA,
};
use sortbench::instances::{InstanceName, NPerPe};

#[derive(Parser)]
#[command(name = "sortbench", about = "Distributed sorting benchmark on a simulated cluster")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an algorithm x instance x p x n/p grid and emit CSV.
    Run(RunArgs),
    /// Measure the rank error of the distributed median estimator.
    MedianError(MedianArgs),
    /// Print the recommended algorithm for a problem size.
    Select(SelectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated algorithm ids.
    #[arg(long, value_delimiter = ',', required = true)]
    algo: Vec<Algo>,
    /// Comma-separated instance ids.
    #[arg(long, value_delimiter = ',', required = true)]
    instance: Vec<InstanceName>,
    /// Comma-separated cluster dimensions d; each run uses p = 2^d PEs.
    #[arg(long, value_delimiter = ',', required = true)]
    log_p: Vec<u32>,
    /// Comma-separated elements per PE; fractions like 1/27 are allowed.
    #[arg(long, value_delimiter = ',', required = true)]
    n_per_pe: Vec<NPerPe>,
    /// Repetitions per cell; repetition 0 is flagged as warmup.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Message startup cost.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Per-word transfer cost.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MedianArgs {
    /// Comma-separated input sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Total number of elements.
    #[arg(long)]
    n: u64,
    /// Cluster dimension d, for p = 2^d PEs.
    #[arg(long)]
    log_p: u32,
}

fn emit(csv: String, out: Option<PathBuf>) -> Result<(), String> {
    match out {
        Some(path) => fs::write(&path, csv).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn real_main() -> Result<(), String> {
    match Cli::parse().cmd {
        Cmd::Run(a) => {
            let grid = GridConfig {
                algos: a.algo,
                instances: a.instance,
                log_ps: a.log_p,
                n_per_pes: a.n_per_pe,
                reps: a.reps,
                seed: a.seed,
                alpha: a.alpha,
                beta: a.beta,
            };
            let rows = run_experiment(&grid).map_err(|e| e.to_string())?;
            emit(rows_to_csv(&rows), a.out)
        }
        Cmd::MedianError(a) => {
            let rows = median_error_experiment(&a.n, a.trials, a.seed);
            emit(median_rows_to_csv(&rows), a.out)
        }
        Cmd::Select(a) => {
            println!("{}", select_algorithm(a.n, a.log_p));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
