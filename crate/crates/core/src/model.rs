//! Fano-Anderson model description, parameter schedules and Gaussian
//! initial data.
//!
//! The combined single-particle index runs over the system levels first and
//! then over every reservoir mode in reservoir order:
//! `c = (a_1 .. a_N, b_{1,1} .. b_{1,K_1}, b_{2,1} ..)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, c, CMat, C64, ZERO};

/// Particle statistics of the system and reservoirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    /// `+1` for bosons, `-1` for fermions (the upper/lower sign of `±`).
    pub fn sign(self) -> f64 {
        match self {
            Statistics::Boson => 1.0,
            Statistics::Fermion => -1.0,
        }
    }

    /// Bose-Einstein or Fermi-Dirac occupation `1 / (exp(beta x) ∓ 1)`.
    ///
    /// `beta = inf` is the zero-temperature limit (fermions: step function
    /// with 1/2 at `x = 0`).
    pub fn occupation(self, beta: f64, x: f64) -> f64 {
        match self {
            Statistics::Fermion => {
                if beta.is_infinite() {
                    if x < 0.0 {
                        1.0
                    } else if x > 0.0 {
                        0.0
                    } else {
                        0.5
                    }
                } else {
                    0.5 * (1.0 - (0.5 * beta * x).tanh())
                }
            }
            Statistics::Boson => {
                if beta.is_infinite() {
                    0.0
                } else {
                    1.0 / (beta * x).exp_m1()
                }
            }
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistics::Boson => f.write_str("boson"),
            Statistics::Fermion => f.write_str("fermion"),
        }
    }
}

/// Values a schedule can carry.
pub trait Sample: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn is_finite_sample(&self) -> bool;
}

impl Sample for f64 {
    fn is_finite_sample(&self) -> bool {
        self.is_finite()
    }
}

impl Sample for C64 {
    fn is_finite_sample(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

const COVERAGE_SLACK: f64 = 1e-9;

/// Time dependence of a single model parameter (energy units, ħ = 1).
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    /// Piecewise constant: `values[0]` before `breaks[0]`, `values[i + 1]`
    /// from `breaks[i]` on.
    Quench { breaks: Vec<f64>, values: Vec<T> },
    /// Samples at `start + k * step`, linearly interpolated.
    Tabulated { start: f64, step: f64, samples: Vec<T> },
}

impl<T: Sample> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule::Constant(value)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    pub fn at(&self, t: f64) -> Result<T> {
        match self {
            Schedule::Constant(v) => Ok(*v),
            Schedule::Quench { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::ScheduleRange {
                        t,
                        reason: format!(
                            "quench has {} breaks but {} values",
                            breaks.len(),
                            values.len()
                        ),
                    });
                }
                let idx = breaks.iter().take_while(|&&b| t >= b).count();
                Ok(values[idx])
            }
            Schedule::Tabulated { start, step, samples } => {
                if samples.is_empty() || *step <= 0.0 {
                    return Err(Error::ScheduleRange {
                        t,
                        reason: "tabulated schedule is empty".into(),
                    });
                }
                let end = start + step * (samples.len() - 1) as f64;
                if t < start - COVERAGE_SLACK || t > end + COVERAGE_SLACK {
                    return Err(Error::ScheduleRange {
                        t,
                        reason: format!("tabulated schedule covers [{start}, {end}]"),
                    });
                }
                if samples.len() == 1 {
                    return Ok(samples[0]);
                }
                let x = ((t - start) / step).clamp(0.0, (samples.len() - 1) as f64);
                let k = (x.floor() as usize).min(samples.len() - 2);
                let frac = x - k as f64;
                Ok(samples[k] + (samples[k + 1] - samples[k]) * frac)
            }
        }
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        match self {
            Schedule::Tabulated { start, step, samples } => {
                !samples.is_empty()
                    && *step > 0.0
                    && *start <= t0 + COVERAGE_SLACK
                    && start + step * (samples.len() - 1) as f64 >= t1 - COVERAGE_SLACK
            }
            _ => true,
        }
    }

    fn shape_problem(&self) -> Option<String> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Quench { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    Some(format!(
                        "quench needs breaks + 1 values, got {} breaks and {} values",
                        breaks.len(),
                        values.len()
                    ))
                } else if breaks.windows(2).any(|w| w[1] < w[0]) {
                    Some("quench breaks must be sorted".into())
                } else {
                    None
                }
            }
            Schedule::Tabulated { step, samples, .. } => {
                if samples.is_empty() {
                    Some("tabulated schedule has no samples".into())
                } else if !(*step > 0.0) {
                    Some("tabulated schedule needs a positive step".into())
                } else {
                    None
                }
            }
        }
    }
}

/// One reservoir mode `b_{αk}` with energy `ε_αk(t)` and couplings
/// `V_{iαk}(t)` to every system level.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub energy: Schedule<f64>,
    pub coupling: Vec<Schedule<C64>>,
}

impl Mode {
    pub fn constant(energy: f64, coupling: &[C64]) -> Self {
        Self {
            energy: Schedule::Constant(energy),
            coupling: coupling.iter().map(|&v| Schedule::Constant(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reservoir {
    pub modes: Vec<Mode>,
}

impl Reservoir {
    /// Uniform band of `count` modes at the cell midpoints of `[low, high]`
    /// with `|V|^2 = gamma * Δε / 2π` times `|weight_i|^2`, the finite-mode
    /// emulation of a flat spectral density with decay rate `gamma`.
    pub fn uniform_band(count: usize, low: f64, high: f64, gamma: f64, weights: &[C64]) -> Self {
        let width = (high - low) / count as f64;
        let v = (gamma * width / (2.0 * std::f64::consts::PI)).sqrt();
        let modes = (0..count)
            .map(|k| {
                let eps = low + (k as f64 + 0.5) * width;
                let coupling: Vec<C64> = weights.iter().map(|w| w * v).collect();
                Mode::constant(eps, &coupling)
            })
            .collect();
        Self { modes }
    }
}

/// Fano-Anderson model: `N` system levels linearly coupled to reservoirs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub statistics: Statistics,
    /// `ε_ij(t)`, row-major `N x N`.
    pub eps_sys: Vec<Vec<Schedule<C64>>>,
    pub reservoirs: Vec<Reservoir>,
}

impl ModelSpec {
    pub fn new(statistics: Statistics, eps: &CMat) -> Self {
        let n = eps.nrows();
        let eps_sys = (0..n)
            .map(|i| (0..n).map(|j| Schedule::Constant(eps[(i, j)])).collect())
            .collect();
        Self { statistics, eps_sys, reservoirs: Vec::new() }
    }

    pub fn with_reservoir(mut self, reservoir: Reservoir) -> Self {
        self.reservoirs.push(reservoir);
        self
    }

    pub fn levels(&self) -> usize {
        self.eps_sys.len()
    }

    pub fn mode_count(&self) -> usize {
        self.reservoirs.iter().map(|r| r.modes.len()).sum()
    }

    pub fn modes(&self) -> impl Iterator<Item = &Mode> {
        self.reservoirs.iter().flat_map(|r| r.modes.iter())
    }

    /// Reservoir index of every mode in combined order.
    pub fn mode_reservoirs(&self) -> Vec<usize> {
        self.reservoirs
            .iter()
            .enumerate()
            .flat_map(|(a, r)| std::iter::repeat_n(a, r.modes.len()))
            .collect()
    }

    /// True when no parameter depends on time.
    pub fn is_stationary(&self) -> bool {
        self.eps_sys.iter().flatten().all(|s| s.is_constant())
            && self
                .modes()
                .all(|m| m.energy.is_constant() && m.coupling.iter().all(|s| s.is_constant()))
    }

    pub fn system_energies(&self, t: f64) -> Result<CMat> {
        let n = self.levels();
        let mut eps = CMat::zeros(n, n);
        for (i, row) in self.eps_sys.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!("row {i} of the level energies has {} entries", row.len())));
            }
            for (j, s) in row.iter().enumerate() {
                eps[(i, j)] = s.at(t)?;
            }
        }
        Ok(eps)
    }
}

/// One-body matrix `h(t)` of the quadratic Hamiltonian in the combined
/// index: system block `ε(t)`, bath diagonal `ε_αk(t)`, off-diagonal
/// `h[i, k] = V_ik(t)`, `h[k, i] = V_ik(t)*`.
pub fn build_single_particle_hamiltonian(spec: &ModelSpec, t: f64) -> Result<CMat> {
    let n = spec.levels();
    let dim = n + spec.mode_count();
    let mut h = CMat::zeros(dim, dim);
    h.view_mut((0, 0), (n, n)).copy_from(&spec.system_energies(t)?);
    for (q, mode) in spec.modes().enumerate() {
        let b = n + q;
        h[(b, b)] = c(mode.energy.at(t)?, 0.0);
        if mode.coupling.len() != n {
            return Err(Error::Shape(format!(
                "mode {q} has {} couplings for {n} levels",
                mode.coupling.len()
            )));
        }
        for (i, v) in mode.coupling.iter().enumerate() {
            let v = v.at(t)?;
            h[(i, b)] = v;
            h[(b, i)] = v.conj();
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Shape,
    Hermiticity,
    Coverage,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            DiagnosticKind::Shape => "shape",
            DiagnosticKind::Hermiticity => "hermiticity",
            DiagnosticKind::Coverage => "coverage",
            DiagnosticKind::NonFinite => "non-finite",
        };
        write!(f, "[{tag}] {}", self.message)
    }
}

const HERMITICITY_TOL: f64 = 1e-12;

/// Checks every model invariant on the run interval. Never fails; returns an
/// empty list when the model is usable.
pub fn validate_model(spec: &ModelSpec, grid: &TimeGrid) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Diagnostic { kind, message });
    let n = spec.levels();
    if n == 0 {
        push(DiagnosticKind::Shape, "model has no system levels".into());
        return out;
    }
    for (i, row) in spec.eps_sys.iter().enumerate() {
        if row.len() != n {
            push(
                DiagnosticKind::Shape,
                format!("level energy row {i} has {} entries, expected {n}", row.len()),
            );
        }
    }
    for (q, mode) in spec.modes().enumerate() {
        if mode.coupling.len() != n {
            push(
                DiagnosticKind::Shape,
                format!("mode {q} has {} couplings, expected {n}", mode.coupling.len()),
            );
        }
    }
    if !out.is_empty() {
        return out;
    }

    let (t0, t1) = (grid.t0, grid.t_final);
    let mut check_shape_cov = |name: String, problem: Option<String>, covers: bool| {
        if let Some(p) = problem {
            out.push(Diagnostic { kind: DiagnosticKind::Shape, message: format!("{name}: {p}") });
        } else if !covers {
            out.push(Diagnostic {
                kind: DiagnosticKind::Coverage,
                message: format!("{name} does not cover the run interval [{t0}, {t1}]"),
            });
        }
    };
    for (i, row) in spec.eps_sys.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            check_shape_cov(format!("eps_sys[{i}][{j}]"), s.shape_problem(), s.covers(t0, t1));
        }
    }
    for (q, mode) in spec.modes().enumerate() {
        check_shape_cov(
            format!("mode {q} energy"),
            mode.energy.shape_problem(),
            mode.energy.covers(t0, t1),
        );
        for (i, s) in mode.coupling.iter().enumerate() {
            check_shape_cov(
                format!("mode {q} coupling {i}"),
                s.shape_problem(),
                s.covers(t0, t1),
            );
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut hermitian_reported = false;
    let mut finite_reported = false;
    for s in 0..=2 * grid.steps {
        let t = grid.half_time(s);
        match build_single_particle_hamiltonian(spec, t) {
            Ok(h) => {
                if !finite_reported && h.iter().any(|z| !z.is_finite_sample()) {
                    finite_reported = true;
                    out.push(Diagnostic {
                        kind: DiagnosticKind::NonFinite,
                        message: format!("non-finite parameter value at t = {t}"),
                    });
                }
                let eps = h.view((0, 0), (n, n)).clone_owned();
                let defect = linalg::hermiticity_defect(&eps);
                if !hermitian_reported && defect > HERMITICITY_TOL {
                    hermitian_reported = true;
                    out.push(Diagnostic {
                        kind: DiagnosticKind::Hermiticity,
                        message: format!(
                            "level energies eps_sys are not Hermitian at t = {t} (defect {defect:.3e})"
                        ),
                    });
                }
            }
            Err(e) => {
                out.push(Diagnostic { kind: DiagnosticKind::Coverage, message: e.to_string() });
                break;
            }
        }
    }
    out
}

/// Schedule values at every grid node and midpoint, evaluated once.
///
/// Half-step index `s` corresponds to `t0 + s h / 2`; node `n` is `s = 2n`.
#[derive(Debug, Clone)]
pub struct SampledModel {
    pub grid: TimeGrid,
    pub statistics: Statistics,
    pub n_sys: usize,
    pub n_modes: usize,
    pub stationary: bool,
    eps_sys: Vec<C64>,
    mode_energy: Vec<f64>,
    coupling: Vec<C64>,
}

impl SampledModel {
    pub fn new(spec: &ModelSpec, grid: &TimeGrid) -> Result<Self> {
        let diags = validate_model(spec, grid);
        if !diags.is_empty() {
            return Err(Error::Validation(diags.iter().map(|d| d.to_string()).collect()));
        }
        let n = spec.levels();
        let k = spec.mode_count();
        let samples = 2 * grid.steps + 1;
        let mut eps_sys = Vec::with_capacity(samples * n * n);
        let mut mode_energy = Vec::with_capacity(samples * k);
        let mut coupling = Vec::with_capacity(samples * n * k);
        for s in 0..samples {
            let t = grid.half_time(s);
            eps_sys.extend_from_slice(spec.system_energies(t)?.as_slice());
            for mode in spec.modes() {
                mode_energy.push(mode.energy.at(t)?);
            }
            for mode in spec.modes() {
                for v in &mode.coupling {
                    coupling.push(v.at(t)?);
                }
            }
        }
        Ok(Self {
            grid: *grid,
            statistics: spec.statistics,
            n_sys: n,
            n_modes: k,
            stationary: spec.is_stationary(),
            eps_sys,
            mode_energy,
            coupling,
        })
    }

    /// `ε(t)` block at half-step index `s`.
    pub fn eps_sys_half(&self, s: usize) -> &[C64] {
        let nn = self.n_sys * self.n_sys;
        &self.eps_sys[s * nn..(s + 1) * nn]
    }

    pub fn eps_sys_node(&self, n: usize) -> &[C64] {
        self.eps_sys_half(2 * n)
    }

    pub fn mode_energies_half(&self, s: usize) -> &[f64] {
        &self.mode_energy[s * self.n_modes..(s + 1) * self.n_modes]
    }

    /// `V(t)` as an `N x K` column-major block at half-step index `s`.
    pub fn coupling_half(&self, s: usize) -> &[C64] {
        let nk = self.n_sys * self.n_modes;
        &self.coupling[s * nk..(s + 1) * nk]
    }

    pub fn coupling_node(&self, n: usize) -> &[C64] {
        self.coupling_half(2 * n)
    }

    /// `h(t)` at half-step index `s`.
    pub fn hamiltonian_half(&self, s: usize) -> CMat {
        let n = self.n_sys;
        let dim = n + self.n_modes;
        let mut h = CMat::zeros(dim, dim);
        let eps = self.eps_sys_half(s);
        for j in 0..n {
            for i in 0..n {
                h[(i, j)] = eps[i + j * n];
            }
        }
        let e = self.mode_energies_half(s);
        let v = self.coupling_half(s);
        for q in 0..self.n_modes {
            h[(n + q, n + q)] = c(e[q], 0.0);
            for i in 0..n {
                h[(i, n + q)] = v[i + q * n];
                h[(n + q, i)] = v[i + q * n].conj();
            }
        }
        h
    }
}

/// `(β, μ)` of a thermal reservoir.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalBath {
    pub beta: f64,
    pub mu: f64,
}

/// Supported initial states of the total system.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStateSpec {
    /// Thermal state of the fully coupled Hamiltonian at `t0`.
    PartitionFreeThermal { beta: f64, mu: f64 },
    /// Product of a Gaussian system state and thermal reservoirs.
    DecoupledThermal {
        reservoirs: Vec<ThermalBath>,
        /// `⟨a†_j a_i⟩` at `t0` (entry `(i, j)`).
        system_occupation: CMat,
        /// `⟨a_j a_i⟩` at `t0` (entry `(i, j)`).
        system_pairs: CMat,
    },
    CustomGaussian { c0: CMat, p0: CMat },
}

/// One-body data of a Gaussian state of the total system:
/// `C0[m, n] = ⟨c†_n c_m⟩`, `P0[m, n] = ⟨c_n c_m⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInitialData {
    pub n_sys: usize,
    pub c0: CMat,
    pub p0: CMat,
}

impl GaussianInitialData {
    pub fn dim(&self) -> usize {
        self.c0.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.dim() - self.n_sys
    }

    fn block(m: &CMat, r0: usize, c0: usize, rows: usize, cols: usize) -> CMat {
        m.view((r0, c0), (rows, cols)).clone_owned()
    }

    pub fn c_ss(&self) -> CMat {
        Self::block(&self.c0, 0, 0, self.n_sys, self.n_sys)
    }
    pub fn c_sb(&self) -> CMat {
        Self::block(&self.c0, 0, self.n_sys, self.n_sys, self.n_modes())
    }
    /// `C0[k, i] = ⟨a†_i b_k⟩`.
    pub fn c_bs(&self) -> CMat {
        Self::block(&self.c0, self.n_sys, 0, self.n_modes(), self.n_sys)
    }
    pub fn c_bb(&self) -> CMat {
        Self::block(&self.c0, self.n_sys, self.n_sys, self.n_modes(), self.n_modes())
    }
    pub fn p_ss(&self) -> CMat {
        Self::block(&self.p0, 0, 0, self.n_sys, self.n_sys)
    }
    pub fn p_sb(&self) -> CMat {
        Self::block(&self.p0, 0, self.n_sys, self.n_sys, self.n_modes())
    }
    /// `P0[k, i] = ⟨a_i b_k⟩`.
    pub fn p_bs(&self) -> CMat {
        Self::block(&self.p0, self.n_sys, 0, self.n_modes(), self.n_sys)
    }
    pub fn p_bb(&self) -> CMat {
        Self::block(&self.p0, self.n_sys, self.n_sys, self.n_modes(), self.n_modes())
    }

    pub fn has_pairs(&self) -> bool {
        self.p0.iter().any(|z| *z != ZERO)
    }

    /// Violated invariants, empty when the data describe a valid state.
    pub fn problems(&self, statistics: Statistics) -> Vec<String> {
        const TOL: f64 = 1e-10;
        let mut out = Vec::new();
        let d = self.c0.nrows();
        if self.c0.ncols() != d || self.p0.nrows() != d || self.p0.ncols() != d {
            out.push(format!(
                "C0 ({}x{}) and P0 ({}x{}) must be square with equal size",
                self.c0.nrows(),
                self.c0.ncols(),
                self.p0.nrows(),
                self.p0.ncols()
            ));
            return out;
        }
        if self.n_sys > d {
            out.push(format!("{} system levels exceed matrix size {d}", self.n_sys));
            return out;
        }
        let herm = linalg::hermiticity_defect(&self.c0);
        if herm > TOL {
            out.push(format!("C0 is not Hermitian (defect {herm:.3e})"));
        }
        let eig = linalg::hermitian_eigenvalues(&self.c0);
        let (lo, hi) = (
            eig.first().copied().unwrap_or(0.0),
            eig.last().copied().unwrap_or(0.0),
        );
        let sym = linalg::max_abs(&(&self.p0 - self.p0.transpose() * c(statistics.sign(), 0.0)));
        match statistics {
            Statistics::Fermion => {
                if lo < -TOL || hi > 1.0 + TOL {
                    out.push(format!("fermion C0 eigenvalues must lie in [0, 1], found [{lo}, {hi}]"));
                }
                if sym > TOL {
                    out.push(format!("fermion P0 must be antisymmetric (defect {sym:.3e})"));
                }
            }
            Statistics::Boson => {
                if lo < -TOL {
                    out.push(format!("boson C0 must be positive semidefinite, min eigenvalue {lo}"));
                }
                if sym > TOL {
                    out.push(format!("boson P0 must be symmetric (defect {sym:.3e})"));
                }
            }
        }
        out
    }
}

/// Builds `C0`, `P0` of the requested initial state at `t0`.
pub fn initial_correlations(
    spec: &ModelSpec,
    init: &InitialStateSpec,
    t0: f64,
) -> Result<GaussianInitialData> {
    let n = spec.levels();
    let k = spec.mode_count();
    let dim = n + k;
    let stats = spec.statistics;
    let data = match init {
        InitialStateSpec::PartitionFreeThermal { beta, mu } => {
            if !(*beta > 0.0) {
                return Err(Error::Domain(format!("beta must be positive, got {beta}")));
            }
            let h = build_single_particle_hamiltonian(spec, t0)?;
            let (energies, _) = linalg::hermitian_eigen(&h);
            if stats == Statistics::Boson && energies.first().is_some_and(|&e0| *mu >= e0) {
                return Err(Error::Domain(format!(
                    "boson partition-free state needs mu < min eig h(t0) = {}, got mu = {mu}",
                    energies[0]
                )));
            }
            let c0 = linalg::hermitian_function(&h, |e| stats.occupation(*beta, e - mu));
            GaussianInitialData { n_sys: n, c0, p0: CMat::zeros(dim, dim) }
        }
        InitialStateSpec::DecoupledThermal { reservoirs, system_occupation, system_pairs } => {
            if reservoirs.len() != spec.reservoirs.len() {
                return Err(Error::Config(format!(
                    "{} reservoir temperatures given for {} reservoirs",
                    reservoirs.len(),
                    spec.reservoirs.len()
                )));
            }
            if system_occupation.shape() != (n, n) || system_pairs.shape() != (n, n) {
                return Err(Error::Shape(format!("system blocks must be {n}x{n}")));
            }
            let mut c0 = CMat::zeros(dim, dim);
            let mut p0 = CMat::zeros(dim, dim);
            c0.view_mut((0, 0), (n, n)).copy_from(system_occupation);
            p0.view_mut((0, 0), (n, n)).copy_from(system_pairs);
            let owners = spec.mode_reservoirs();
            for (q, mode) in spec.modes().enumerate() {
                let bath = reservoirs[owners[q]];
                let e = mode.energy.at(t0)?;
                if stats == Statistics::Boson && e <= bath.mu {
                    return Err(Error::Domain(format!(
                        "boson mode {q} energy {e} must exceed its reservoir mu = {}",
                        bath.mu
                    )));
                }
                c0[(n + q, n + q)] = c(stats.occupation(bath.beta, e - bath.mu), 0.0);
            }
            GaussianInitialData { n_sys: n, c0, p0 }
        }
        InitialStateSpec::CustomGaussian { c0, p0 } => {
            if c0.shape() != (dim, dim) {
                return Err(Error::Validation(vec![format!(
                    "C0 must be {dim}x{dim}, got {}x{}",
                    c0.nrows(),
                    c0.ncols()
                )]));
            }
            GaussianInitialData { n_sys: n, c0: c0.clone(), p0: p0.clone() }
        }
    };
    let problems = data.problems(stats);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(data)
}
