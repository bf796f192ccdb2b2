use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fano_master::cli::{load_config, run_comparison, run_simulation, run_sweep, ExitStatus, RunOptions};

#[derive(Parser)]
#[command(name = "fano-master", version, about = "Exact master-equation simulator for Fano-Anderson open systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory receiving the CSV files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Override the number of grid steps.
    #[arg(long, global = true)]
    grid_steps: Option<usize>,

    /// Halve the time step (compare: also run h/2 and report convergence).
    #[arg(long, global = true)]
    halve_step: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the master-equation pipeline and write the requested quantities.
    Simulate { config: PathBuf },
    /// Run pipeline and exact oracle and write an error report.
    Compare { config: PathBuf },
    /// Repeat a run over values of one numeric parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path of the parameter, e.g. model.reservoirs.0.band.gamma
        #[arg(long)]
        axis: String,
        /// Comma-separated values (may be empty).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("FANO_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    let cli = Cli::parse();
    let opts = RunOptions { out_dir: cli.out_dir, grid_steps: cli.grid_steps, halve_step: cli.halve_step };
    let result = match &cli.command {
        Command::Simulate { config } => load_config(config).and_then(|(_, cfg)| run_simulation(&cfg, &opts)),
        Command::Compare { config } => load_config(config).and_then(|(_, cfg)| run_comparison(&cfg, &opts)),
        Command::Sweep { config, axis, values } => std::fs::read_to_string(config)
            .map_err(Into::into)
            .and_then(|text| run_sweep(&text, axis, values, &opts)),
    };
    let status = match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
