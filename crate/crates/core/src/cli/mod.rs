//! Configuration-driven command layer behind the `fano-master` binary.

pub mod commands;
pub mod config;

pub use commands::{load_config, run_comparison, run_simulation, run_sweep, ExitStatus, RunOptions};
pub use config::{parse_config, RunConfig};
