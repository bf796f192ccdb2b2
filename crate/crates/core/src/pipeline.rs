//! End-to-end run: model → kernels → Green functions → master equation.

use crate::error::{Error, Result};
use crate::greens::{DysonStrategy, GreensOptions, GreensSolution};
use crate::grid::TimeGrid;
use crate::linalg::{self, CMat};
use crate::master::{evolve, gaussian_state, CoefficientTrajectory, DensityMatrix, EvolveOptions, FockSpace, Trajectory};
use crate::model::{InitialStateSpec, ModelSpec, Statistics};

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub strategy: DysonStrategy,
    /// Boson cutoff per mode; fermions always use 1.
    pub n_max: Option<usize>,
    /// Integrate the reduced density matrix (needs a Fock reconstruction
    /// of the initial reduced state).
    pub evolve_state: bool,
    pub evolve: EvolveOptions,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { strategy: DysonStrategy::Auto, n_max: None, evolve_state: true, evolve: EvolveOptions::default() }
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub greens: GreensSolution,
    pub coefficients: CoefficientTrajectory,
    pub fock: Option<FockSpace>,
    pub trajectory: Option<Trajectory>,
}

impl Simulation {
    pub fn run(spec: &ModelSpec, init: &InitialStateSpec, grid: &TimeGrid, options: &SimulationOptions) -> Result<Self> {
        let greens = GreensSolution::solve(spec, init, grid, GreensOptions { strategy: options.strategy })?;
        let coefficients = CoefficientTrajectory::from_greens(&greens)?;
        let (fock, trajectory) = if options.evolve_state {
            let n_max = match (spec.statistics, options.n_max) {
                (Statistics::Fermion, _) => 1,
                (Statistics::Boson, Some(n)) => n,
                (Statistics::Boson, None) => {
                    return Err(Error::Argument("boson runs need an explicit Fock cutoff n_max".into()))
                }
            };
            let fock = FockSpace::new(spec.statistics, spec.levels(), n_max)?;
            let rho0 = initial_reduced_state(&greens, &fock)?;
            let traj = evolve(&rho0, &coefficients, &fock, options.evolve)?;
            (Some(fock), Some(traj))
        } else {
            (None, None)
        };
        Ok(Self { greens, coefficients, fock, trajectory })
    }

    pub fn grid(&self) -> TimeGrid {
        self.greens.field.grid
    }

    /// `⟨a†_i a_i⟩(t_n)`, from the evolved state when available and from
    /// the lesser Green function otherwise.
    pub fn occupations(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.grid().len()).map(|n| Ok(self.one_body(n)?.diagonal().iter().map(|z| z.re).collect())).collect()
    }

    /// `M_ij = ⟨a†_j a_i⟩(t_n)`.
    pub fn one_body(&self, n: usize) -> Result<CMat> {
        match (&self.trajectory, &self.fock) {
            (Some(traj), Some(fock)) => Ok(crate::master::moments(&traj.states[n], fock).0),
            _ => Ok(self.greens.lesser_diag(n)?.0 * linalg::c(0.0, -1.0)),
        }
    }
}

/// Normalized Fock-space reduced state at `t0` from the initial one-body data.
pub fn initial_reduced_state(greens: &GreensSolution, fock: &FockSpace) -> Result<DensityMatrix> {
    let rho = gaussian_state(fock, &greens.init.c_ss(), &greens.init.p_ss())?;
    DensityMatrix::normalized(rho)
}
