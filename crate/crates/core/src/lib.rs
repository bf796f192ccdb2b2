//! Exact time-local master equations for the Fano-Anderson model.

pub mod cli;
pub mod error;
pub mod greens;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod master;
pub mod model;
pub mod oracle;
pub mod pipeline;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{InitialStateSpec, ModelSpec, Statistics};
pub use pipeline::{Simulation, SimulationOptions};
