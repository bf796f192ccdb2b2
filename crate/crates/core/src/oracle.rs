//! Exact reference dynamics of the finite total system in the one-body
//! sector, and comparison of a simulation against it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, c, CMat, I};
use crate::master::{gaussian_state, moments, FockSpace};
use crate::model::{build_single_particle_hamiltonian, GaussianInitialData, InitialStateSpec, ModelSpec};
use crate::pipeline::{Simulation, SimulationOptions};

/// Limit on `‖U†U − 1‖_max` before a run is rejected.
pub const UNITARITY_LIMIT: f64 = 1e-6;

/// Largest `h_sub ‖h‖_∞` of one RK4 substep.
const MAX_PHASE_PER_SUBSTEP: f64 = 0.02;

fn inf_norm(m: &CMat) -> f64 {
    m.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `U(t_n)` solving `i dU/dt = h(t) U`, `U(t0) = 1`, on every grid node.
#[derive(Debug, Clone)]
pub struct TotalPropagator {
    pub grid: TimeGrid,
    pub n_sys: usize,
    pub u: Vec<CMat>,
    /// Unitarity defect found at each re-projection, `(step, defect)`.
    pub projections: Vec<(usize, f64)>,
}

impl TotalPropagator {
    pub fn max_defect(&self) -> f64 {
        self.projections.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    /// `U_SS(t_n)`, the propagator of the system levels.
    pub fn system_block(&self, n: usize) -> CMat {
        self.u[n].view((0, 0), (self.n_sys, self.n_sys)).clone_owned()
    }
}

/// RK4 integration with polar re-projection every `reproject_every` grid
/// steps (and at the final step). Each grid step is split into substeps
/// short enough for the local energy scale.
pub fn total_propagator_with(spec: &ModelSpec, grid: &TimeGrid, reproject_every: usize) -> Result<TotalPropagator> {
    let dim = spec.levels() + spec.mode_count();
    let h = grid.step();
    let every = reproject_every.max(1);
    let hm = |t: f64| -> Result<CMat> { Ok(build_single_particle_hamiltonian(spec, t)? * (-I)) };
    let mut u = Vec::with_capacity(grid.len());
    let mut cur = linalg::identity(dim);
    u.push(cur.clone());
    let mut projections = Vec::new();
    for n in 0..grid.steps {
        let t = grid.time(n);
        let scale = inf_norm(&hm(t + 0.5 * h)?);
        let subs = ((h * scale / MAX_PHASE_PER_SUBSTEP).ceil() as usize).max(1);
        let hs = h / subs as f64;
        for k in 0..subs {
            let ts = t + k as f64 * hs;
            // end stages sampled just inside the substep
            let nudge = 1e-9 * hs;
            let a0 = hm(ts + nudge)?;
            let am = hm(ts + 0.5 * hs)?;
            let a1 = hm(ts + hs - nudge)?;
            let k1 = &a0 * &cur;
            let k2 = &am * (&cur + &k1 * c(0.5 * hs, 0.0));
            let k3 = &am * (&cur + &k2 * c(0.5 * hs, 0.0));
            let k4 = &a1 * (&cur + &k3 * c(hs, 0.0));
            cur += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(hs / 6.0, 0.0);
        }
        let step = n + 1;
        if step % every == 0 || step == grid.steps {
            let defect = linalg::max_abs(&(cur.adjoint() * &cur - linalg::identity(dim)));
            log::debug!("oracle re-projection at step {step}: defect {defect:.3e}");
            if defect > UNITARITY_LIMIT {
                return Err(Error::Unitarity { step, defect });
            }
            projections.push((step, defect));
            cur = linalg::unitary_projection(&cur);
        }
        u.push(cur.clone());
    }
    Ok(TotalPropagator { grid: *grid, n_sys: spec.levels(), u, projections })
}

pub fn total_propagator(spec: &ModelSpec, grid: &TimeGrid) -> Result<TotalPropagator> {
    total_propagator_with(spec, grid, 100)
}

/// `(C(t), P(t)) = (U C0 U†, U P0 U^T)` for the total system.
pub fn exact_moments(u: &CMat, init: &GaussianInitialData) -> (CMat, CMat) {
    (u * &init.c0 * u.adjoint(), u * &init.p0 * u.transpose())
}

/// System blocks of [`exact_moments`]: `(⟨a†_j a_i⟩, ⟨a_j a_i⟩)`.
pub fn system_moments(prop: &TotalPropagator, init: &GaussianInitialData, n: usize) -> (CMat, CMat) {
    let (cm, pm) = exact_moments(&prop.u[n], init);
    let k = prop.n_sys;
    (cm.view((0, 0), (k, k)).clone_owned(), pm.view((0, 0), (k, k)).clone_owned())
}

/// Reduced system state at node `n`, rebuilt from its one-body data.
pub fn exact_reduced_density(
    prop: &TotalPropagator,
    init: &GaussianInitialData,
    n: usize,
    fock: &FockSpace,
) -> Result<CMat> {
    if fock.modes != prop.n_sys {
        return Err(Error::Shape(format!(
            "Fock space has {} modes, system has {}",
            fock.modes, prop.n_sys
        )));
    }
    let (m, s) = system_moments(prop, init, n);
    gaussian_state(fock, &m, &s)
}

/// Two-time lesser functions of the system from the total propagator:
/// `G<(τ,t) = i [U(τ) C0 U(t)†]_SS`, `Ḡ<(τ,t) = i [U(τ) P0 U(t)^T]_SS`.
pub fn exact_lesser(prop: &TotalPropagator, init: &GaussianInitialData, tau: usize, t: usize) -> (CMat, CMat) {
    let k = prop.n_sys;
    let (ut, ux) = (&prop.u[tau], &prop.u[t]);
    let g = (ut * &init.c0 * ux.adjoint()).view((0, 0), (k, k)) * I;
    let gbar = (ut * &init.p0 * ux.transpose()).view((0, 0), (k, k)) * I;
    (g, gbar)
}

/// Pass/fail limits for [`ErrorReport::failures`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub u_err: f64,
    pub gless_err: f64,
    pub moment_err: f64,
    pub trace_dist: f64,
    pub trace_drift: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            u_err: 1e-3,
            gless_err: 1e-3,
            moment_err: 1e-3,
            trace_dist: 1e-3,
            trace_drift: 1e-8,
            ratio_min: 3.0,
            ratio_max: 4.5,
        }
    }
}

/// Time-resolved errors of a simulation against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub u_err: Vec<f64>,
    pub gless_err: Vec<f64>,
    /// Absent when the reduced state was not evolved.
    pub moment_err: Option<Vec<f64>>,
    /// Absent when the Fock reconstruction does not cover the case.
    pub trace_dist: Option<Vec<f64>>,
    pub gamma_bar: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl ErrorReport {
    pub fn max_u_err(&self) -> f64 {
        max_of(&self.u_err)
    }
    pub fn max_gless_err(&self) -> f64 {
        max_of(&self.gless_err)
    }
    pub fn max_moment_err(&self) -> Option<f64> {
        self.moment_err.as_deref().map(max_of)
    }
    pub fn max_trace_dist(&self) -> Option<f64> {
        self.trace_dist.as_deref().map(max_of)
    }
    pub fn max_gamma_bar(&self) -> f64 {
        max_of(&self.gamma_bar)
    }

    /// Human-readable list of violated limits.
    pub fn failures(&self, tol: &Tolerances) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, value: Option<f64>, limit: f64| {
            if let Some(v) = value {
                if !(v < limit) {
                    out.push(format!("{name} = {v:.3e} exceeds {limit:.1e}"));
                }
            }
        };
        check("u_err", Some(self.max_u_err()), tol.u_err);
        check("Gless_err", Some(self.max_gless_err()), tol.gless_err);
        check("moment_err", self.max_moment_err(), tol.moment_err);
        check("trace_dist", self.max_trace_dist(), tol.trace_dist);
        out
    }
}

/// Compares every layer of `sim` with the oracle on the same grid.
pub fn compare(sim: &Simulation, prop: &TotalPropagator) -> Result<ErrorReport> {
    let grid = sim.grid();
    if grid != prop.grid {
        return Err(Error::GridMismatch(format!(
            "simulation grid {:?} differs from oracle grid {:?}",
            grid, prop.grid
        )));
    }
    let init = &sim.greens.init;
    let per_node: Vec<(f64, f64, Option<f64>, Option<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|n| -> Result<_> {
            let u_err = linalg::max_abs(&(sim.greens.field.u_mat(n, 0) - prop.system_block(n)));
            let (g, gbar) = sim.greens.lesser_diag(n)?;
            let (m_exact, s_exact) = system_moments(prop, init, n);
            let gless_err = linalg::max_abs(&(g - &m_exact * I))
                .max(linalg::max_abs(&(gbar - &s_exact * I)));
            let (moment_err, trace_dist) = match (&sim.trajectory, &sim.fock) {
                (Some(traj), Some(fock)) => {
                    let rho = &traj.states[n];
                    let (m, s) = moments(rho, fock);
                    let me = linalg::max_abs(&(m - &m_exact)).max(linalg::max_abs(&(s - &s_exact)));
                    let td = gaussian_state(fock, &m_exact, &s_exact)
                        .ok()
                        .map(|exact| linalg::trace_distance(rho, &exact));
                    (Some(me), td)
                }
                _ => (None, None),
            };
            let gb = linalg::max_abs(&sim.coefficients.nodes[n].gamma_bar);
            Ok((u_err, gless_err, moment_err, trace_dist, gb))
        })
        .collect::<Result<_>>()?;
    let moment_err: Option<Vec<f64>> = per_node.iter().map(|r| r.2).collect();
    let trace_dist: Option<Vec<f64>> = per_node.iter().map(|r| r.3).collect();
    if sim.trajectory.is_some() && trace_dist.is_none() {
        log::warn!("reduced state outside reconstruction scope; comparing moments only");
    }
    Ok(ErrorReport {
        times: grid.times(),
        u_err: per_node.iter().map(|r| r.0).collect(),
        gless_err: per_node.iter().map(|r| r.1).collect(),
        moment_err,
        trace_dist,
        gamma_bar: per_node.iter().map(|r| r.4).collect(),
    })
}

/// Maximal errors at step `h` and `h/2` for one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub quantity: String,
    pub err_h: f64,
    pub err_half: f64,
}

impl ConvergenceRow {
    pub fn ratio(&self) -> f64 {
        self.err_h / self.err_half
    }
}

/// Runs the comparison on `grid` and on its refinement.
pub fn convergence_study(
    spec: &ModelSpec,
    init: &InitialStateSpec,
    grid: &TimeGrid,
    options: &SimulationOptions,
) -> Result<(ErrorReport, ErrorReport, Vec<ConvergenceRow>)> {
    let run = |g: &TimeGrid| -> Result<ErrorReport> {
        let sim = Simulation::run(spec, init, g, options)?;
        let prop = total_propagator(spec, g)?;
        compare(&sim, &prop)
    };
    let coarse = run(grid)?;
    let fine = run(&grid.refined())?;
    let mut rows = vec![
        ConvergenceRow { quantity: "u_err".into(), err_h: coarse.max_u_err(), err_half: fine.max_u_err() },
        ConvergenceRow {
            quantity: "Gless_err".into(),
            err_h: coarse.max_gless_err(),
            err_half: fine.max_gless_err(),
        },
    ];
    if let (Some(a), Some(b)) = (coarse.max_moment_err(), fine.max_moment_err()) {
        rows.push(ConvergenceRow { quantity: "moment_err".into(), err_h: a, err_half: b });
    }
    if let (Some(a), Some(b)) = (coarse.max_trace_dist(), fine.max_trace_dist()) {
        rows.push(ConvergenceRow { quantity: "trace_dist".into(), err_h: a, err_half: b });
    }
    Ok((coarse, fine, rows))
}
