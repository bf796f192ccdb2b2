use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use fano_master::greens::{GreensOptions, GreensSolution};
use fano_master::kernels::{particle_kernel_bb, thermal_bath_kernel};
use fano_master::linalg::{self, c, CMat, C64};
use fano_master::master::{
    nz_form_apply, FockSpace, Liouvillian, MasterCoefficients,
};
use fano_master::model::{
    initial_correlations, GaussianInitialData, Mode, Reservoir, ThermalBath,
};
use fano_master::oracle::{self, system_moments, total_propagator};
use fano_master::{InitialStateSpec, ModelSpec, Simulation, SimulationOptions, Statistics, TimeGrid};

type Check = Result<(bool, String), String>;

fn scalar(x: f64) -> CMat {
    CMat::from_element(1, 1, c(x, 0.0))
}

fn six_mode_fermion() -> ModelSpec {
    let modes = [-1.25, -0.75, -0.25, 0.25, 0.75, 1.25]
        .iter()
        .map(|&e| Mode::constant(e, &[c(0.15, 0.0)]))
        .collect();
    ModelSpec::new(Statistics::Fermion, &scalar(0.3)).with_reservoir(Reservoir { modes })
}

fn six_mode_boson() -> ModelSpec {
    let modes = (0..6)
        .map(|k| Mode::constant(0.5 + (k as f64 + 0.5) / 6.0, &[c(0.1, 0.0)]))
        .collect();
    ModelSpec::new(Statistics::Boson, &scalar(1.0)).with_reservoir(Reservoir { modes })
}

fn two_level_fermion() -> ModelSpec {
    let mut eps = CMat::zeros(2, 2);
    eps[(0, 0)] = c(0.4, 0.0);
    eps[(1, 1)] = c(-0.2, 0.0);
    eps[(0, 1)] = c(0.1, 0.05);
    eps[(1, 0)] = c(0.1, -0.05);
    let modes = (0..8)
        .map(|k| {
            let e = -1.4 + 0.4 * k as f64;
            Mode::constant(e, &[c(0.15, 0.0), c(0.1 * (1.0 + 0.1 * k as f64), 0.02)])
        })
        .collect();
    ModelSpec::new(Statistics::Fermion, &eps).with_reservoir(Reservoir { modes })
}

fn decoupled(beta: f64, n0: f64) -> InitialStateSpec {
    InitialStateSpec::DecoupledThermal {
        reservoirs: vec![ThermalBath { beta, mu: 0.0 }],
        system_occupation: scalar(n0),
        system_pairs: CMat::zeros(1, 1),
    }
}

fn grid(t_final: f64, steps: usize) -> TimeGrid {
    TimeGrid::new(0.0, t_final, steps).expect("valid grid")
}

fn options(n_max: Option<usize>, evolve_state: bool) -> SimulationOptions {
    SimulationOptions { n_max, evolve_state, ..SimulationOptions::default() }
}

fn random_matrix(rng: &mut StdRng, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_hermitian(rng: &mut StdRng, d: usize) -> CMat {
    let a = random_matrix(rng, d);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

/// Runs kept around for the homogeneity check.
#[derive(Default)]
struct Pool {
    runs: Vec<(String, Simulation)>,
}

fn criterion_1(pool: &Pool) -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let mut sets: Vec<(FockSpace, Vec<MasterCoefficients>)> = Vec::new();
    for (_, sim) in &pool.runs {
        if let Some(fock) = &sim.fock {
            sets.push((fock.clone(), sim.coefficients.nodes.clone()));
        }
    }
    for (stats, n_max) in [(Statistics::Fermion, 1), (Statistics::Boson, 3)] {
        let fock = FockSpace::new(stats, 2, n_max).map_err(|e| e.to_string())?;
        let random: Vec<MasterCoefficients> = (0..50)
            .map(|_| MasterCoefficients {
                eps_prime: random_hermitian(&mut rng, 2),
                gamma: random_hermitian(&mut rng, 2),
                gamma_tilde: random_hermitian(&mut rng, 2),
                gamma_bar: random_matrix(&mut rng, 2),
            })
            .collect();
        sets.push((fock, random));
    }
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for (fock, coeffs) in &sets {
        let rhos: Vec<CMat> = (0..100).map(|_| random_hermitian(&mut rng, fock.dim)).collect();
        for cs in coeffs {
            let l = Liouvillian::new(cs, fock).map_err(|e| e.to_string())?;
            for rho in &rhos {
                worst = worst.max(linalg::trace(&l.apply(rho)).norm());
            }
            count += 1;
        }
    }
    let drift = pool
        .runs
        .iter()
        .filter_map(|(_, s)| s.trajectory.as_ref().map(|t| t.max_trace_drift()))
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-12 && drift < 1e-8,
        format!("{count} coefficient sets x 100 states, max |tr L rho| = {worst:.2e}, max |tr rho - 1| = {drift:.2e}"),
    ))
}

fn criterion_2() -> Check {
    let mut rng = StdRng::seed_from_u64(22);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=3);
        let rho = random_hermitian(&mut rng, 4);
        let chi = random_matrix(&mut rng, k);
        let a: Vec<CMat> = (0..k).map(|_| random_matrix(&mut rng, 4)).collect();
        let b: Vec<CMat> = (0..k).map(|_| random_matrix(&mut rng, 4)).collect();
        let out = nz_form_apply(&rho, &chi, &a, &b).map_err(|e| e.to_string())?;
        worst = worst.max(linalg::trace(&out).norm());
    }
    Ok((worst < 1e-13, format!("1000 draws, max |tr| = {worst:.2e}")))
}

fn criterion_3() -> Check {
    let rabi = ModelSpec::new(Statistics::Fermion, &scalar(0.5))
        .with_reservoir(Reservoir { modes: vec![Mode::constant(0.5, &[c(0.5, 0.0)])] });
    let band = ModelSpec::new(Statistics::Fermion, &scalar(0.3))
        .with_reservoir(Reservoir::uniform_band(40, -2.0, 2.0, 0.2, &[c(1.0, 0.0)]));
    let init = InitialStateSpec::PartitionFreeThermal { beta: 1.0, mu: 0.0 };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec) in [("rabi", rabi), ("band40", band)] {
        let (_, _, rows) = oracle::convergence_study(&spec, &init, &grid(10.0, 1000), &options(None, false))
            .map_err(|e| e.to_string())?;
        let row = rows.iter().find(|r| r.quantity == "u_err").ok_or("no u_err row")?;
        let ratio = row.ratio();
        ok &= row.err_h < 1e-3 && (3.0..=4.5).contains(&ratio);
        parts.push(format!("{name}: err {:.2e} -> {:.2e}, ratio {ratio:.2}", row.err_h, row.err_half));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_4(pool: &mut Pool) -> Check {
    let spec = six_mode_fermion();
    let g = grid(10.0, 1000);
    let prop = total_propagator(&spec, &g).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.5, 2.0] {
        let init = InitialStateSpec::PartitionFreeThermal { beta, mu: 0.0 };
        let sim = Simulation::run(&spec, &init, &g, &options(None, true)).map_err(|e| e.to_string())?;
        let data = &sim.greens.init;
        let mut worst: f64 = 0.0;
        for n in 0..g.len() {
            let (gl, gbar) = sim.greens.lesser_diag(n).map_err(|e| e.to_string())?;
            let (m, s) = system_moments(&prop, data, n);
            worst = worst
                .max(linalg::max_abs(&(gl * c(0.0, -1.0) - m)))
                .max(linalg::max_abs(&(gbar * c(0.0, -1.0) - s)));
        }
        ok &= worst < 1e-3;
        parts.push(format!("beta {beta}: max |G< - G<_exact| = {worst:.2e}"));
        pool.runs.push((format!("pf beta {beta}"), sim));
    }
    Ok((ok, parts.join("; ")))
}

fn max_occupation(prop: &oracle::TotalPropagator, data: &GaussianInitialData) -> f64 {
    (0..prop.grid.len()).map(|n| system_moments(prop, data, n).0[(0, 0)].re).fold(0.0, f64::max)
}

fn criterion_5(pool: &mut Pool) -> Check {
    let g = grid(10.0, 2000);
    let cases: Vec<(&str, ModelSpec, InitialStateSpec)> = vec![
        ("(a) fermion partition-free", six_mode_fermion(), InitialStateSpec::PartitionFreeThermal { beta: 2.0, mu: 0.0 }),
        ("(b) fermion decoupled", six_mode_fermion(), decoupled(2.0, 0.8)),
        ("(c) boson decoupled", six_mode_boson(), decoupled(2.0, 0.5)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec, init) in cases {
        let prop = total_propagator(&spec, &g).map_err(|e| e.to_string())?;
        let n_max = match spec.statistics {
            Statistics::Fermion => None,
            Statistics::Boson => {
                let data = initial_correlations(&spec, &init, 0.0).map_err(|e| e.to_string())?;
                Some(FockSpace::boson_cutoff(max_occupation(&prop, &data), 1e-8))
            }
        };
        let sim = Simulation::run(&spec, &init, &g, &options(n_max, true)).map_err(|e| e.to_string())?;
        let report = oracle::compare(&sim, &prop).map_err(|e| e.to_string())?;
        let td = report.max_trace_dist().ok_or("no reduced-state reconstruction")?;
        ok &= td < 1e-3;
        let cutoff = n_max.map(|n| format!(", n_max {n}")).unwrap_or_default();
        parts.push(format!("{name}: max trace distance {td:.2e}{cutoff}"));
        pool.runs.push((name.to_string(), sim));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_6() -> Check {
    let g = grid(5.0, 200);
    let mut ok = true;
    let mut kernel_err: f64 = 0.0;
    let mut gamma_bar: f64 = 0.0;
    let cases = [
        (six_mode_fermion(), decoupled(0.5, 0.3)),
        (six_mode_fermion(), InitialStateSpec::PartitionFreeThermal { beta: 2.0, mu: 0.0 }),
        (six_mode_boson(), decoupled(2.0, 0.5)),
    ];
    for (spec, init) in cases {
        let sol = GreensSolution::solve(&spec, &init, &g, GreensOptions::default()).map_err(|e| e.to_string())?;
        if let InitialStateSpec::DecoupledThermal { reservoirs, .. } = &init {
            let owners = spec.mode_reservoirs();
            for t1 in 0..g.len() {
                for t2 in 0..g.len() {
                    let a = particle_kernel_bb(&sol.model, &sol.phases, &sol.init, t1, t2).map_err(|e| e.to_string())?;
                    let b = thermal_bath_kernel(&sol.model, &sol.phases, reservoirs, &owners, t1, t2)
                        .map_err(|e| e.to_string())?;
                    kernel_err = kernel_err.max(linalg::max_abs(&(a - b)));
                }
            }
        }
        let sim_coeffs = fano_master::master::CoefficientTrajectory::from_greens(&sol).map_err(|e| e.to_string())?;
        gamma_bar = sim_coeffs.nodes.iter().map(|cs| linalg::max_abs(&cs.gamma_bar)).fold(gamma_bar, f64::max);
    }
    ok &= kernel_err < 1e-12 && gamma_bar < 1e-12;
    Ok((ok, format!("max |g~bb - thermal| = {kernel_err:.2e}, max |gamma_bar| = {gamma_bar:.2e}")))
}

fn criterion_7() -> Check {
    let (eps, beta, gamma) = (2.0, 0.5, 0.1);
    let (low, high, count) = (-1.0, 5.0, 60);
    let recurrence = 2.0 * PI * count as f64 / (high - low);
    let t_final = 60.0;
    let spec = ModelSpec::new(Statistics::Fermion, &scalar(eps))
        .with_reservoir(Reservoir::uniform_band(count, low, high, gamma, &[c(1.0, 0.0)]));
    let sim = Simulation::run(&spec, &decoupled(beta, 0.0), &grid(t_final, 1200), &options(None, true))
        .map_err(|e| e.to_string())?;
    let occ = sim.occupations().map_err(|e| e.to_string())?;
    let late = occ.last().ok_or("empty run")?[0];
    let target = Statistics::Fermion.occupation(beta, eps);
    let rel = (late - target).abs() / target;
    Ok((
        gamma * beta <= 0.05 && t_final < recurrence && rel < 0.05,
        format!(
            "Gamma/T = {:.3}, n(t={t_final}) = {late:.4}, Fermi = {target:.4}, deviation {:.2}% (recurrence at t = {recurrence:.1})",
            gamma * beta,
            rel * 100.0
        ),
    ))
}

fn criterion_8() -> Check {
    let (eps, beta, gamma) = (0.5, 4.0, 0.3);
    let spec = ModelSpec::new(Statistics::Fermion, &scalar(eps))
        .with_reservoir(Reservoir::uniform_band(60, eps - 3.0, eps + 3.0, gamma, &[c(1.0, 0.0)]));
    let g = grid(40.0, 800);
    let n0 = Statistics::Fermion.occupation(beta, eps);
    let prop = total_propagator(&spec, &g).map_err(|e| e.to_string())?;
    let mut occs = Vec::new();
    let mut accuracy: f64 = 0.0;
    for init in [InitialStateSpec::PartitionFreeThermal { beta, mu: 0.0 }, decoupled(beta, n0)] {
        let sim = Simulation::run(&spec, &init, &g, &options(None, true)).map_err(|e| e.to_string())?;
        let report = oracle::compare(&sim, &prop).map_err(|e| e.to_string())?;
        accuracy = accuracy.max(report.max_gless_err()).max(report.max_trace_dist().unwrap_or(f64::INFINITY));
        occs.push(sim.occupations().map_err(|e| e.to_string())?);
    }
    let diff: Vec<f64> = occs[0].iter().zip(&occs[1]).map(|(a, b)| (a[0] - b[0]).abs()).collect();
    let max_diff = diff.iter().cloned().fold(0.0, f64::max);
    let late_from = g.len() * 9 / 10;
    let transient = diff[g.len() / 10..].iter().cloned().fold(0.0, f64::max);
    let late = diff[late_from..].iter().cloned().fold(0.0, f64::max);
    Ok((
        accuracy < 1e-3 && max_diff > 1e-2 && late < 0.1 * max_diff,
        format!(
            "max |n_pf - n_dt| = {max_diff:.3e} ({transient:.2e} after t = {:.0}), late (t > {:.0}) = {late:.2e}, run accuracy vs exact {accuracy:.2e}",
            g.time(g.len() / 10),
            g.time(late_from)
        ),
    ))
}

fn criterion_9(pool: &mut Pool) -> Check {
    let spec = two_level_fermion();
    let g = grid(10.0, 1000);
    let init = InitialStateSpec::PartitionFreeThermal { beta: 1.5, mu: 0.1 };
    let sim = Simulation::run(&spec, &init, &g, &options(None, true)).map_err(|e| e.to_string())?;
    let prop = total_propagator(&spec, &g).map_err(|e| e.to_string())?;
    let fock = sim.fock.as_ref().ok_or("no Fock space")?;
    let traj = sim.trajectory.as_ref().ok_or("no trajectory")?;
    let (a0, a1) = (fock.annihilation(0).map_err(|e| e.to_string())?, fock.annihilation(1).map_err(|e| e.to_string())?);
    let pair_number = a0.adjoint() * a1.adjoint() * &a1 * &a0;
    let mut worst: f64 = 0.0;
    let mut largest: f64 = 0.0;
    for n in 0..g.len() {
        let rho = &traj.states[n];
        let two_body: C64 = linalg::trace(&(rho * &pair_number));
        let (m, s) = system_moments(&prop, &sim.greens.init, n);
        let wick = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + s[(0, 1)].norm_sqr();
        worst = worst.max((two_body - wick).norm());
        largest = largest.max(wick.norm());
    }
    pool.runs.push(("two-level".into(), sim));
    Ok((worst < 1e-3, format!("max |<n0 n1> - Wick| = {worst:.2e} (two-body value up to {largest:.3})")))
}

fn main() -> ExitCode {
    let mut pool = Pool::default();
    let mut results: Vec<(u32, &str, Check, f64)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let out = f();
        results.push((id, name, out, start.elapsed().as_secs_f64()));
    };
    timed(2, "trace-free NZ form", &mut criterion_2);
    timed(3, "propagator vs exact dynamics", &mut criterion_3);
    timed(4, "lesser Green function vs exact moments", &mut || criterion_4(&mut pool));
    timed(5, "closed-loop reduced state", &mut || criterion_5(&mut pool));
    timed(6, "thermal-reservoir limit", &mut criterion_6);
    timed(7, "steady state vs Fermi function", &mut criterion_7);
    timed(8, "initial-correlation sensitivity", &mut criterion_8);
    timed(9, "Wick factorization", &mut || criterion_9(&mut pool));
    timed(1, "homogeneity and trace preservation", &mut || criterion_1(&pool));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, out, secs) in &results {
        let (pass, detail) = match out {
            Ok((pass, detail)) => (*pass, detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("[{}] criterion {id} {name}: {detail} ({secs:.1}s)", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
