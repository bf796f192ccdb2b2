use std::fs;
use std::path::{Path, PathBuf};

use crate::cli::config::{parse_config, set_path, validate, ConfigFile, Quantity, RunConfig};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, CMat};
use crate::master::DensityMatrix;
use crate::model::{InitialStateSpec, Statistics};
use crate::oracle::{compare, convergence_study, total_propagator, ConvergenceRow, ErrorReport};
use crate::pipeline::{Simulation, SimulationOptions};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigOrIo = 1,
    Singular = 2,
    Tolerance = 3,
}

impl ExitStatus {
    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::SingularPropagator { .. } => ExitStatus::Singular,
            Error::Integration { .. } | Error::Unitarity { .. } => ExitStatus::Tolerance,
            _ => ExitStatus::ConfigOrIo,
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub grid_steps: Option<usize>,
    pub halve_step: bool,
}

fn apply_overrides(grid: TimeGrid, opts: &RunOptions) -> Result<TimeGrid> {
    let mut grid = match opts.grid_steps {
        Some(steps) => TimeGrid::new(grid.t0, grid.t_final, steps)?,
        None => grid,
    };
    if opts.halve_step {
        grid = grid.refined();
    }
    Ok(grid)
}

/// CSV file whose first line is `# config_hash=.. t0=.. t_final=.. steps=..`.
pub struct CsvOut {
    writer: csv::Writer<fs::File>,
}

impl CsvOut {
    pub fn create(path: &Path, hash: &str, grid: &TimeGrid, header: &[String]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut file = fs::File::create(path)?;
        use std::io::Write;
        writeln!(file, "# config_hash={hash} t0={} t_final={} steps={}", grid.t0, grid.t_final, grid.steps)?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn matrix_header(name: &str, n: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            h.push(format!("{name}_{i}_{j}_re"));
            h.push(format!("{name}_{i}_{j}_im"));
        }
    }
    h
}

fn matrix_fields(m: &CMat, out: &mut Vec<String>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(num(m[(i, j)].re));
            out.push(num(m[(i, j)].im));
        }
    }
}

fn simulation_options(cfg: &RunConfig, evolve_state: bool) -> SimulationOptions {
    SimulationOptions {
        n_max: (cfg.spec.statistics == Statistics::Boson).then_some(cfg.n_max),
        evolve_state,
        ..SimulationOptions::default()
    }
}

/// Writes one requested quantity of a finished run.
pub fn write_quantity(sim: &Simulation, q: Quantity, path: &Path, hash: &str) -> Result<()> {
    let grid = sim.grid();
    let n = sim.greens.model.n_sys;
    let mut header = vec!["t".to_string()];
    match q {
        Quantity::Coefficients => {
            for name in ["eps_prime", "gamma", "gamma_tilde", "gamma_bar"] {
                header.extend(matrix_header(name, n));
            }
        }
        Quantity::Occupations => header.extend((0..n).map(|i| format!("n_{i}"))),
        Quantity::Trace => header.push("trace".into()),
        Quantity::Purity => header.push("purity".into()),
        Quantity::LesserGreenDiag => {
            header.extend(matrix_header("G_less", n));
            header.extend(matrix_header("Gbar_less", n));
        }
        Quantity::UNorm => header.push("u_norm".into()),
        Quantity::PositivityMinEig => header.push("min_eig".into()),
    }
    let mut out = CsvOut::create(path, hash, &grid, &header)?;
    let state = |k: usize| -> Result<DensityMatrix> {
        let traj = sim
            .trajectory
            .as_ref()
            .ok_or_else(|| Error::State("quantity needs the evolved reduced state".into()))?;
        Ok(DensityMatrix { rho: traj.states[k].clone() })
    };
    for k in 0..grid.len() {
        let mut row = vec![num(grid.time(k))];
        match q {
            Quantity::Coefficients => {
                let cf = &sim.coefficients.nodes[k];
                for m in [&cf.eps_prime, &cf.gamma, &cf.gamma_tilde, &cf.gamma_bar] {
                    matrix_fields(m, &mut row);
                }
            }
            Quantity::Occupations => {
                let m = sim.one_body(k)?;
                row.extend((0..n).map(|i| num(m[(i, i)].re)));
            }
            Quantity::Trace => row.push(num(state(k)?.trace())),
            Quantity::Purity => row.push(num(state(k)?.purity())),
            Quantity::LesserGreenDiag => {
                let (g, gbar) = sim.greens.lesser_diag(k)?;
                matrix_fields(&g, &mut row);
                matrix_fields(&gbar, &mut row);
            }
            Quantity::UNorm => row.push(num(linalg::spectral_norm(&sim.greens.field.u_mat(k, 0)))),
            Quantity::PositivityMinEig => row.push(num(state(k)?.min_eigenvalue())),
        }
        out.row(&row)?;
    }
    out.finish()
}

/// `simulate`: runs the pipeline and writes the requested CSV files.
pub fn run_simulation(cfg: &RunConfig, opts: &RunOptions) -> Result<ExitStatus> {
    let grid = apply_overrides(cfg.grid, opts)?;
    let needs_state = cfg.outputs.iter().any(|(q, _)| q.needs_state());
    let sim = Simulation::run(&cfg.spec, &cfg.initial_state, &grid, &simulation_options(cfg, needs_state))?;
    if let Some(traj) = &sim.trajectory {
        let drift = traj.max_trace_drift();
        if drift > cfg.tolerances.trace_drift {
            log::error!("trace drift {drift:.3e} exceeds {:.1e}", cfg.tolerances.trace_drift);
            return Ok(ExitStatus::Tolerance);
        }
    }
    for (q, path) in &cfg.outputs {
        let full = opts.out_dir.join(path);
        write_quantity(&sim, *q, &full, &cfg.hash)?;
        log::info!("wrote {}", full.display());
    }
    Ok(ExitStatus::Success)
}

fn write_report(path: &Path, hash: &str, grid: &TimeGrid, report: &ErrorReport) -> Result<()> {
    let header: Vec<String> =
        ["t", "u_err", "Gless_err", "moment_err", "trace_dist", "gamma_bar"].iter().map(|s| s.to_string()).collect();
    let mut out = CsvOut::create(path, hash, grid, &header)?;
    for k in 0..report.times.len() {
        out.row(&[
            num(report.times[k]),
            num(report.u_err[k]),
            num(report.gless_err[k]),
            opt_num(report.moment_err.as_ref().map(|v| v[k])),
            opt_num(report.trace_dist.as_ref().map(|v| v[k])),
            num(report.gamma_bar[k]),
        ])?;
    }
    out.finish()
}

fn write_convergence(path: &Path, hash: &str, grid: &TimeGrid, rows: &[ConvergenceRow]) -> Result<()> {
    let header: Vec<String> = ["quantity", "err_h", "err_h2", "ratio"].iter().map(|s| s.to_string()).collect();
    let mut out = CsvOut::create(path, hash, grid, &header)?;
    for r in rows {
        out.row(&[r.quantity.clone(), num(r.err_h), num(r.err_half), num(r.ratio())])?;
    }
    out.finish()
}

/// `compare`: runs pipeline and oracle, writes `comparison.csv` (and
/// `convergence.csv` with `--halve-step`).
pub fn run_comparison(cfg: &RunConfig, opts: &RunOptions) -> Result<ExitStatus> {
    let base = apply_overrides(cfg.grid, &RunOptions { halve_step: false, ..opts.clone() })?;
    let sim_opts = simulation_options(cfg, state_supported(cfg));
    let tol = &cfg.tolerances;
    let mut failures;
    let report = if opts.halve_step {
        let (coarse, fine, rows) = convergence_study(&cfg.spec, &cfg.initial_state, &base, &sim_opts)?;
        write_convergence(&opts.out_dir.join("convergence.csv"), &cfg.hash, &base, &rows)?;
        failures = coarse.failures(tol);
        for r in rows.iter().filter(|r| r.quantity == "u_err") {
            let ratio = r.ratio();
            if !(tol.ratio_min..=tol.ratio_max).contains(&ratio) {
                failures.push(format!("u_err convergence ratio {ratio:.3} outside [{}, {}]", tol.ratio_min, tol.ratio_max));
            }
        }
        write_report(&opts.out_dir.join("comparison_half_step.csv"), &cfg.hash, &base.refined(), &fine)?;
        coarse
    } else {
        let sim = Simulation::run(&cfg.spec, &cfg.initial_state, &base, &sim_opts)?;
        let prop = total_propagator(&cfg.spec, &base)?;
        let report = compare(&sim, &prop)?;
        failures = report.failures(tol);
        report
    };
    if report.trace_dist.is_none() {
        log::warn!("trace distance unavailable for this configuration; moment comparison only");
    }
    write_report(&opts.out_dir.join("comparison.csv"), &cfg.hash, &base, &report)?;
    if failures.is_empty() {
        Ok(ExitStatus::Success)
    } else {
        for f in &failures {
            log::error!("{f}");
        }
        Ok(ExitStatus::Tolerance)
    }
}

/// The reduced state can be evolved when its initial Fock form is known.
fn state_supported(cfg: &RunConfig) -> bool {
    match &cfg.initial_state {
        InitialStateSpec::PartitionFreeThermal { .. } => true,
        InitialStateSpec::DecoupledThermal { system_pairs, .. } => linalg::max_abs(system_pairs) == 0.0,
        InitialStateSpec::CustomGaussian { .. } => false,
    }
}

/// Equilibrium occupation the steady state is compared with.
fn target_occupation(cfg: &RunConfig) -> Result<f64> {
    let (beta, mu) = match &cfg.initial_state {
        InitialStateSpec::PartitionFreeThermal { beta, mu } => (*beta, *mu),
        InitialStateSpec::DecoupledThermal { reservoirs, .. } => {
            let b = reservoirs.first().ok_or_else(|| Error::Argument("sweep needs a thermal reservoir".into()))?;
            (b.beta, b.mu)
        }
        InitialStateSpec::CustomGaussian { .. } => {
            return Err(Error::Argument("sweep needs a thermal initial state".into()))
        }
    };
    let eps = cfg.spec.eps_sys[0][0].at(cfg.grid.t_final)?.re;
    Ok(cfg.spec.statistics.occupation(beta, eps - mu))
}

/// `sweep`: one run per value of the parameter at `axis`; writes
/// `sweep.csv` with the final occupation of level 0 against its thermal
/// target.
pub fn run_sweep(text: &str, axis: &str, values: &[f64], opts: &RunOptions) -> Result<ExitStatus> {
    let base = parse_config(text)?;
    let doc: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    // validates the path even when no values are given
    set_path(&mut doc.clone(), axis, 0.0)?;
    let header: Vec<String> =
        ["value", "occupation", "target", "rel_deviation"].iter().map(|s| s.to_string()).collect();
    let grid = apply_overrides(base.grid, opts)?;
    let mut out = CsvOut::create(&opts.out_dir.join("sweep.csv"), &base.hash, &grid, &header)?;
    for &value in values {
        let mut edited = doc.clone();
        set_path(&mut edited, axis, value)?;
        let file: ConfigFile = edited.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg = validate(file, text, base.hash.clone())?;
        let grid = apply_overrides(cfg.grid, opts)?;
        let sim = Simulation::run(&cfg.spec, &cfg.initial_state, &grid, &simulation_options(&cfg, false))?;
        let occ = sim.one_body(grid.steps)?[(0, 0)].re;
        let target = target_occupation(&cfg)?;
        let rel = if target != 0.0 { (occ - target).abs() / target.abs() } else { (occ - target).abs() };
        log::info!("{axis} = {value}: occupation {occ:.6}, target {target:.6}");
        out.row(&[num(value), num(occ), num(target), num(rel)])?;
    }
    out.finish()?;
    Ok(ExitStatus::Success)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<(String, RunConfig)> {
    let text = fs::read_to_string(path)?;
    let cfg = parse_config(&text)?;
    Ok((text, cfg))
}
