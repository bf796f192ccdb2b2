//! Exact homogeneous master equation: coefficients, superoperators in a
//! truncated Fock space and time integration of the reduced state.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greens::{log_derivative, GreensSolution};
use crate::grid::TimeGrid;
use crate::linalg::{self, c, CMat, C64, I, ONE, ZERO};
use crate::model::Statistics;

/// Time-local coefficients of the master equation at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterCoefficients {
    pub eps_prime: CMat,
    pub gamma: CMat,
    pub gamma_tilde: CMat,
    pub gamma_bar: CMat,
}

impl MasterCoefficients {
    /// Assembles the coefficients from `κ = u̇u⁻¹`, the equal-time
    /// correlation functions and their derivatives.
    pub fn from_parts(
        kappa: &CMat,
        v: &CMat,
        vdot: &CMat,
        nu: &CMat,
        nudot: &CMat,
        statistics: Statistics,
    ) -> Self {
        let half = c(0.5, 0.0);
        let kd = kappa.adjoint();
        let eps_prime = (kappa - &kd) * c(0.0, 0.5);
        let gamma = (kappa + &kd) * c(-0.5, 0.0);
        let gt = vdot - kappa * v - v * &kd;
        let gamma_tilde = (&gt + gt.adjoint()) * half;
        let gamma_bar =
            (nudot - kappa * nu - nu * kappa.transpose()) * c(-0.5 * statistics.sign(), 0.0);
        Self { eps_prime, gamma, gamma_tilde, gamma_bar }
    }

    pub fn zeros(n: usize) -> Self {
        let z = CMat::zeros(n, n);
        Self { eps_prime: z.clone(), gamma: z.clone(), gamma_tilde: z.clone(), gamma_bar: z }
    }

    pub fn levels(&self) -> usize {
        self.eps_prime.nrows()
    }

    /// `(1 - θ) a + θ b`.
    pub fn lerp(a: &Self, b: &Self, theta: f64) -> Self {
        let (wa, wb) = (c(1.0 - theta, 0.0), c(theta, 0.0));
        Self {
            eps_prime: &a.eps_prime * wa + &b.eps_prime * wb,
            gamma: &a.gamma * wa + &b.gamma * wb,
            gamma_tilde: &a.gamma_tilde * wa + &b.gamma_tilde * wb,
            gamma_bar: &a.gamma_bar * wa + &b.gamma_bar * wb,
        }
    }
}

/// Coefficients at grid node `n` of a solved Green-function layer.
pub fn coefficients(sol: &GreensSolution, n: usize) -> Result<MasterCoefficients> {
    let kappa = log_derivative(&sol.field, n)?;
    let corr = &sol.corr;
    Ok(MasterCoefficients::from_parts(
        &kappa,
        &corr.v_diag[n],
        &corr.vdot_diag[n],
        &corr.nu_diag[n],
        &corr.nudot_diag[n],
        sol.statistics(),
    ))
}

/// Coefficients on every node of a grid.
#[derive(Debug, Clone)]
pub struct CoefficientTrajectory {
    pub grid: TimeGrid,
    pub statistics: Statistics,
    pub nodes: Vec<MasterCoefficients>,
}

impl CoefficientTrajectory {
    pub fn from_greens(sol: &GreensSolution) -> Result<Self> {
        let nodes = (0..sol.field.grid.len())
            .into_par_iter()
            .map(|n| coefficients(sol, n))
            .collect::<Result<_>>()?;
        Ok(Self { grid: sol.field.grid, statistics: sol.statistics(), nodes })
    }

    pub fn levels(&self) -> usize {
        self.nodes.first().map_or(0, MasterCoefficients::levels)
    }

    /// Coefficients at `t0 + (n + θ) h` by linear interpolation.
    pub fn interpolate(&self, n: usize, theta: f64) -> MasterCoefficients {
        if theta == 0.0 || n + 1 >= self.nodes.len() {
            self.nodes[n].clone()
        } else {
            MasterCoefficients::lerp(&self.nodes[n], &self.nodes[n + 1], theta)
        }
    }
}

/// Ladder-operator monomial: maps each basis state to at most one basis
/// state. `entries[col] = Some((row, value))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    entries: Vec<Option<(usize, C64)>>,
}

impl Monomial {
    fn identity(dim: usize) -> Self {
        Self { entries: (0..dim).map(|k| Some((k, ONE))).collect() }
    }

    /// `self * other`.
    fn compose(&self, other: &Self) -> Self {
        let entries = other
            .entries
            .iter()
            .map(|e| {
                e.and_then(|(k, v1)| self.entries[k].map(|(r, v2)| (r, v1 * v2)))
                    .filter(|(_, v)| *v != ZERO)
            })
            .collect();
        Self { entries }
    }

    fn adjoint(&self) -> Self {
        let mut entries = vec![None; self.entries.len()];
        for (col, e) in self.entries.iter().enumerate() {
            if let Some((row, v)) = *e {
                debug_assert!(entries[row].is_none());
                entries[row] = Some((col, v.conj()));
            }
        }
        Self { entries }
    }

    pub fn to_dense(&self) -> CMat {
        let dim = self.entries.len();
        let mut m = CMat::zeros(dim, dim);
        for (col, e) in self.entries.iter().enumerate() {
            if let Some((row, v)) = *e {
                m[(row, col)] = v;
            }
        }
        m
    }
}

/// `out += coef * x * rho * y` for monomials `x`, `y`.
fn sandwich_acc(out: &mut [C64], coef: C64, x: &Monomial, rho: &[C64], y: &Monomial, dim: usize) {
    for (col, ey) in y.entries.iter().enumerate() {
        let Some((k, yv)) = *ey else { continue };
        let s = coef * yv;
        let rho_col = &rho[k * dim..(k + 1) * dim];
        let out_col = &mut out[col * dim..(col + 1) * dim];
        for (kp, ex) in x.entries.iter().enumerate() {
            if let Some((r, xv)) = *ex {
                out_col[r] += s * xv * rho_col[kp];
            }
        }
    }
}

/// Truncated Fock space of `N` modes, occupation `0..=n_max` each.
///
/// Basis index: mode 0 is the most significant digit in base `n_max + 1`.
/// Fermion operators carry Jordan-Wigner signs from the modes before them.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub statistics: Statistics,
    pub modes: usize,
    pub n_max: usize,
    pub dim: usize,
    id: Monomial,
    a: Vec<Monomial>,
    ad: Vec<Monomial>,
    ad_a: Vec<Monomial>,
    a_ad: Vec<Monomial>,
    ad_ad: Vec<Monomial>,
    a_a: Vec<Monomial>,
}

impl FockSpace {
    pub fn new(statistics: Statistics, modes: usize, n_max: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Argument("Fock space needs at least one mode".into()));
        }
        match statistics {
            Statistics::Fermion if n_max != 1 => {
                return Err(Error::Argument(format!("fermion modes need n_max = 1, got {n_max}")))
            }
            Statistics::Boson if n_max == 0 => {
                return Err(Error::Argument("boson n_max must be at least 1".into()))
            }
            _ => {}
        }
        let base = n_max + 1;
        let dim = base
            .checked_pow(modes as u32)
            .filter(|&d| d <= 1 << 16)
            .ok_or_else(|| Error::Argument(format!("Fock dimension {base}^{modes} is too large")))?;
        let digit = |state: usize, i: usize| (state / base.pow((modes - 1 - i) as u32)) % base;
        let a: Vec<Monomial> = (0..modes)
            .map(|i| {
                let stride = base.pow((modes - 1 - i) as u32);
                let entries = (0..dim)
                    .map(|state| {
                        let n = digit(state, i);
                        if n == 0 {
                            return None;
                        }
                        let mut v = (n as f64).sqrt();
                        if statistics == Statistics::Fermion {
                            let parity: usize = (0..i).map(|k| digit(state, k)).sum();
                            if parity % 2 == 1 {
                                v = -v;
                            }
                        }
                        Some((state - stride, c(v, 0.0)))
                    })
                    .collect();
                Monomial { entries }
            })
            .collect();
        let ad: Vec<Monomial> = a.iter().map(Monomial::adjoint).collect();
        let pairs = |f: &dyn Fn(usize, usize) -> Monomial| -> Vec<Monomial> {
            (0..modes * modes).map(|k| f(k / modes, k % modes)).collect()
        };
        let ad_a = pairs(&|i, j| ad[i].compose(&a[j]));
        let a_ad = pairs(&|i, j| a[i].compose(&ad[j]));
        let ad_ad = pairs(&|i, j| ad[i].compose(&ad[j]));
        let a_a = pairs(&|i, j| a[i].compose(&a[j]));
        Ok(Self {
            statistics,
            modes,
            n_max,
            dim,
            id: Monomial::identity(dim),
            a,
            ad,
            ad_a,
            a_ad,
            ad_ad,
            a_a,
        })
    }

    /// Smallest `n_max` with `(n̄/(1+n̄))^n_max < tol`.
    pub fn boson_cutoff(nbar: f64, tol: f64) -> usize {
        if nbar <= 0.0 {
            return 1;
        }
        let x = nbar / (1.0 + nbar);
        ((tol.ln() / x.ln()).floor() as usize + 1).max(1)
    }

    fn check_mode(&self, i: usize) -> Result<()> {
        if i >= self.modes {
            return Err(Error::Argument(format!("mode index {i} out of range for {} modes", self.modes)));
        }
        Ok(())
    }

    pub fn annihilation(&self, i: usize) -> Result<CMat> {
        self.check_mode(i)?;
        Ok(self.a[i].to_dense())
    }

    pub fn creation(&self, i: usize) -> Result<CMat> {
        self.check_mode(i)?;
        Ok(self.ad[i].to_dense())
    }

    /// Occupation of each mode in basis state `state`.
    pub fn occupations_of(&self, state: usize) -> Vec<usize> {
        let base = self.n_max + 1;
        (0..self.modes)
            .map(|i| (state / base.pow((self.modes - 1 - i) as u32)) % base)
            .collect()
    }

    /// Basis index of an occupation pattern.
    pub fn index_of(&self, occupations: &[usize]) -> usize {
        occupations.iter().fold(0, |acc, &n| acc * (self.n_max + 1) + n)
    }

    /// `|0⟩⟨0|`.
    pub fn vacuum(&self) -> CMat {
        let mut rho = CMat::zeros(self.dim, self.dim);
        rho[(0, 0)] = ONE;
        rho
    }

    /// Population of basis states with some mode at the cutoff level.
    pub fn cutoff_leakage(&self, rho: &CMat) -> f64 {
        if self.statistics == Statistics::Fermion {
            return 0.0;
        }
        (0..self.dim)
            .filter(|&s| self.occupations_of(s).contains(&self.n_max))
            .map(|s| rho[(s, s)].re)
            .sum()
    }
}

/// `D(a_j, a†_i) ρ = 2 a_j ρ a†_i − a†_i a_j ρ − ρ a†_i a_j`.
pub fn dissipator(fock: &FockSpace, rho: &CMat, i: usize, j: usize) -> Result<CMat> {
    let aj = fock.annihilation(j)?;
    let adi = fock.creation(i)?;
    let n = &adi * &aj;
    Ok(&aj * rho * &adi * c(2.0, 0.0) - &n * rho - rho * &n)
}

/// `F(X, Y) ρ = Y ρ X ± X ρ Y ∓ Y X ρ − ρ X Y` (upper sign for bosons).
pub fn fluctuator(rho: &CMat, x: &CMat, y: &CMat, statistics: Statistics) -> CMat {
    let s = c(statistics.sign(), 0.0);
    y * rho * x + x * rho * y * s - y * x * rho * s - rho * x * y
}

/// `Σ_ij χ_ij [A_j ρ B_i + B_i ρ A_j − A_j B_i ρ − ρ B_i A_j]`.
pub fn nz_form_apply(rho: &CMat, chi: &CMat, a_ops: &[CMat], b_ops: &[CMat]) -> Result<CMat> {
    let n = a_ops.len();
    if b_ops.len() != n || chi.nrows() != n || chi.ncols() != n {
        return Err(Error::Shape(format!(
            "chi is {}x{} but got {} A and {} B operators",
            chi.nrows(),
            chi.ncols(),
            a_ops.len(),
            b_ops.len()
        )));
    }
    let d = rho.nrows();
    if a_ops.iter().chain(b_ops).any(|op| op.shape() != (d, d)) {
        return Err(Error::Shape(format!("operators must be {d}x{d}")));
    }
    let mut out = CMat::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            let x = chi[(i, j)];
            if x == ZERO {
                continue;
            }
            let (a, b) = (&a_ops[j], &b_ops[i]);
            out += (a * rho * b + b * rho * a - a * b * rho - rho * b * a) * x;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Id,
    AdA(usize),
    AAd(usize),
    AdAd(usize),
    AA(usize),
    A(usize),
    Ad(usize),
}

/// The master-equation generator for one coefficient set, stored as a sum
/// of monomial sandwiches `coef · X ρ Y`.
#[derive(Debug, Clone)]
pub struct Liouvillian<'a> {
    fock: &'a FockSpace,
    terms: Vec<(C64, Op, Op)>,
}

impl<'a> Liouvillian<'a> {
    pub fn new(coeffs: &MasterCoefficients, fock: &'a FockSpace) -> Result<Self> {
        let n = fock.modes;
        if coeffs.levels() != n {
            return Err(Error::Shape(format!(
                "coefficients for {} levels applied in a {n}-mode Fock space",
                coeffs.levels()
            )));
        }
        let s = c(fock.statistics.sign(), 0.0);
        let MasterCoefficients { eps_prime, gamma, gamma_tilde: gt, gamma_bar: gb } = coeffs;
        let gbd = gb.adjoint();
        let mut terms = Vec::with_capacity(16 * n * n);
        let mut push = |coef: C64, x: Op, y: Op| {
            if coef != ZERO {
                terms.push((coef, x, y));
            }
        };
        for i in 0..n {
            for j in 0..n {
                let ij = i * n + j;
                let ji = j * n + i;
                // left multiplication
                push(-I * eps_prime[(i, j)] - gamma[(i, j)] - s * gt[(i, j)], Op::AdA(ij), Op::Id);
                push(-s * gb[(i, j)], Op::AdAd(ij), Op::Id);
                push(-s * gbd[(i, j)], Op::AA(ij), Op::Id);
                // right multiplication
                push(I * eps_prime[(i, j)] - gamma[(i, j)], Op::Id, Op::AdA(ij));
                push(-gt[(i, j)], Op::Id, Op::AAd(ji));
                push(-gb[(i, j)], Op::Id, Op::AdAd(ji));
                push(-gbd[(i, j)], Op::Id, Op::AA(ji));
                // sandwiches
                push(c(2.0, 0.0) * gamma[(i, j)] + s * gt[(i, j)], Op::A(j), Op::Ad(i));
                push(gt[(i, j)], Op::Ad(i), Op::A(j));
                push(gb[(i, j)], Op::Ad(i), Op::Ad(j));
                push(s * gb[(i, j)], Op::Ad(j), Op::Ad(i));
                push(gbd[(i, j)], Op::A(i), Op::A(j));
                push(s * gbd[(i, j)], Op::A(j), Op::A(i));
            }
        }
        Ok(Self { fock, terms })
    }

    fn op(&self, op: Op) -> &Monomial {
        let f = self.fock;
        match op {
            Op::Id => &f.id,
            Op::AdA(k) => &f.ad_a[k],
            Op::AAd(k) => &f.a_ad[k],
            Op::AdAd(k) => &f.ad_ad[k],
            Op::AA(k) => &f.a_a[k],
            Op::A(k) => &f.a[k],
            Op::Ad(k) => &f.ad[k],
        }
    }

    /// `dρ/dt`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let dim = self.fock.dim;
        let mut out = CMat::zeros(dim, dim);
        self.apply_acc(rho, ONE, out.as_mut_slice());
        out
    }

    /// `out += alpha · L(ρ)`.
    fn apply_acc(&self, rho: &CMat, alpha: C64, out: &mut [C64]) {
        let dim = self.fock.dim;
        for &(coef, x, y) in &self.terms {
            sandwich_acc(out, alpha * coef, self.op(x), rho.as_slice(), self.op(y), dim);
        }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }
}

/// Right-hand side of the master equation for a single coefficient set.
pub fn liouvillian_apply(rho: &CMat, coeffs: &MasterCoefficients, fock: &FockSpace) -> Result<CMat> {
    if rho.shape() != (fock.dim, fock.dim) {
        return Err(Error::Shape(format!(
            "density matrix is {}x{}, Fock space has dimension {}",
            rho.nrows(),
            rho.ncols(),
            fock.dim
        )));
    }
    Ok(Liouvillian::new(coeffs, fock)?.apply(rho))
}

/// Reduced density matrix with its invariants checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub rho: CMat,
}

impl DensityMatrix {
    pub const HERMITICITY_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-8;
    pub const POSITIVITY_TOL: f64 = 1e-6;

    pub fn new(rho: CMat) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::Shape(format!("density matrix must be square, got {:?}", rho.shape())));
        }
        let herm = linalg::hermiticity_defect(&rho);
        if herm > Self::HERMITICITY_TOL {
            return Err(Error::State(format!("density matrix not Hermitian (defect {herm:.3e})")));
        }
        let tr = linalg::trace(&rho);
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(Error::State(format!("density matrix trace {tr} differs from 1")));
        }
        let dm = Self { rho };
        let lo = dm.min_eigenvalue();
        if lo < -Self::POSITIVITY_TOL {
            return Err(Error::State(format!("density matrix has eigenvalue {lo:.3e}")));
        }
        Ok(dm)
    }

    /// Rescales a Hermitian, positive matrix to unit trace first.
    pub fn normalized(rho: CMat) -> Result<Self> {
        let tr = linalg::trace(&rho).re;
        if !(tr > 0.0) {
            return Err(Error::State(format!("cannot normalize matrix with trace {tr}")));
        }
        Self::new(rho * c(1.0 / tr, 0.0))
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.rho).re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.rho)[0]
    }
}

/// `(M, S)` with `M_ij = ⟨a†_j a_i⟩` and `S_ij = ⟨a_j a_i⟩`.
pub fn moments(rho: &CMat, fock: &FockSpace) -> (CMat, CMat) {
    let n = fock.modes;
    let expect = |op: &Monomial| -> C64 {
        // tr(op ρ) = Σ_col op[row, col] ρ[col, row]
        op.entries
            .iter()
            .enumerate()
            .filter_map(|(col, e)| e.map(|(row, v)| v * rho[(col, row)]))
            .sum()
    };
    let m = CMat::from_fn(n, n, |i, j| expect(&fock.ad_a[j * n + i]));
    let s = CMat::from_fn(n, n, |i, j| expect(&fock.a_a[j * n + i]));
    (m, s)
}

/// Fock-space density matrix of the Gaussian state with one-body data
/// `M_ij = ⟨a†_j a_i⟩` and no pair amplitudes.
///
/// Fermions: any number of modes. Bosons: product states only (diagonal
/// `M`), thermal in each mode, truncated at the cutoff without
/// renormalization.
pub fn gaussian_state(fock: &FockSpace, m: &CMat, s: &CMat) -> Result<CMat> {
    let n = fock.modes;
    if m.shape() != (n, n) || s.shape() != (n, n) {
        return Err(Error::Shape(format!("moment matrices must be {n}x{n}")));
    }
    if linalg::max_abs(s) > 1e-12 {
        return Err(Error::Unsupported(
            "Fock reconstruction of states with pair amplitudes; compare moments instead".into(),
        ));
    }
    match fock.statistics {
        Statistics::Fermion => {
            let (occ, w) = linalg::hermitian_eigen(m);
            let mut rho = linalg::identity(fock.dim);
            for (k, &nk) in occ.iter().enumerate() {
                let mut d = CMat::zeros(fock.dim, fock.dim);
                for i in 0..n {
                    d += fock.a[i].to_dense() * w[(i, k)].conj();
                }
                let number = d.adjoint() * &d;
                let factor = linalg::identity(fock.dim) * c(1.0 - nk, 0.0) + number * c(2.0 * nk - 1.0, 0.0);
                rho *= factor;
            }
            Ok(rho)
        }
        Statistics::Boson => {
            let off = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|ij| m[ij].norm())
                .fold(0.0, f64::max);
            if off > 1e-12 {
                return Err(Error::Unsupported(
                    "Fock reconstruction of correlated multi-mode boson states; compare moments instead".into(),
                ));
            }
            let mut rho = CMat::zeros(fock.dim, fock.dim);
            for state in 0..fock.dim {
                let w: f64 = fock
                    .occupations_of(state)
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| {
                        let nb = m[(i, i)].re.max(0.0);
                        let x = nb / (1.0 + nb);
                        (1.0 - x) * x.powi(k as i32)
                    })
                    .product();
                rho[(state, state)] = c(w, 0.0);
            }
            Ok(rho)
        }
    }
}

/// Monitoring record of one evolution step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub trace_drift: f64,
    /// `‖ρ − ρ†‖_max` before symmetrization.
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub cutoff_leakage: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub trace_tol: f64,
    pub hermiticity_tol: f64,
    /// Compute the minimum eigenvalue every this many steps (0 disables).
    pub positivity_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { trace_tol: 1e-8, hermiticity_tol: 1e-9, positivity_every: 1 }
    }
}

/// Reduced states on every grid node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<CMat>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn min_eigenvalue(&self) -> f64 {
        self.records.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.records.iter().map(|r| r.trace_drift).fold(0.0, f64::max)
    }
}

/// Classic RK4 for `dρ/dt = L(t) ρ`, coefficients interpolated linearly at
/// half steps; `ρ` is symmetrized after each step.
pub fn evolve(
    rho0: &DensityMatrix,
    traj: &CoefficientTrajectory,
    fock: &FockSpace,
    options: EvolveOptions,
) -> Result<Trajectory> {
    let grid = traj.grid;
    let dim = fock.dim;
    if rho0.rho.shape() != (dim, dim) {
        return Err(Error::Shape(format!(
            "initial state is {}x{}, Fock space has dimension {dim}",
            rho0.rho.nrows(),
            rho0.rho.ncols()
        )));
    }
    if traj.statistics != fock.statistics {
        return Err(Error::Argument("coefficient and Fock-space statistics differ".into()));
    }
    let h = grid.step();
    let tr0 = linalg::trace(&rho0.rho).re;
    let monitor = |step: usize, rho: &CMat, defect: f64| -> StepRecord {
        let min_eigenvalue = if options.positivity_every > 0 && step % options.positivity_every == 0 {
            linalg::hermitian_eigenvalues(rho)[0]
        } else {
            f64::NAN
        };
        StepRecord {
            step,
            t: grid.time(step),
            trace_drift: (linalg::trace(rho).re - tr0).abs(),
            hermiticity_defect: defect,
            min_eigenvalue,
            cutoff_leakage: fock.cutoff_leakage(rho),
        }
    };
    let mut states = Vec::with_capacity(grid.len());
    let mut records = Vec::with_capacity(grid.len());
    let mut rho = rho0.rho.clone();
    records.push(monitor(0, &rho, linalg::hermiticity_defect(&rho)));
    states.push(rho.clone());
    let mut l0 = Liouvillian::new(&traj.nodes[0], fock)?;
    for n in 0..grid.steps {
        let mid_coeffs = traj.interpolate(n, 0.5);
        let lm = Liouvillian::new(&mid_coeffs, fock)?;
        let l1 = Liouvillian::new(&traj.nodes[n + 1], fock)?;
        let k1 = l0.apply(&rho);
        let k2 = lm.apply(&(&rho + &k1 * c(0.5 * h, 0.0)));
        let k3 = lm.apply(&(&rho + &k2 * c(0.5 * h, 0.0)));
        let k4 = l1.apply(&(&rho + &k3 * c(h, 0.0)));
        rho += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        let defect = linalg::hermiticity_defect(&rho);
        rho = (&rho + rho.adjoint()) * c(0.5, 0.0);
        let rec = monitor(n + 1, &rho, defect);
        log::trace!(
            "step {} t={:.4} trace_drift={:.2e} herm_defect={:.2e} min_eig={:.2e}",
            rec.step,
            rec.t,
            rec.trace_drift,
            defect,
            rec.min_eigenvalue
        );
        if !(rec.trace_drift <= options.trace_tol) {
            return Err(Error::Integration {
                step: n + 1,
                reason: format!("trace drift {:.3e} exceeds {:.1e}", rec.trace_drift, options.trace_tol),
            });
        }
        if !(defect <= options.hermiticity_tol) {
            return Err(Error::Integration {
                step: n + 1,
                reason: format!("hermiticity defect {defect:.3e} exceeds {:.1e}", options.hermiticity_tol),
            });
        }
        if rec.min_eigenvalue < -DensityMatrix::POSITIVITY_TOL {
            log::warn!("negative eigenvalue {:.3e} at step {}", rec.min_eigenvalue, n + 1);
        }
        records.push(rec);
        states.push(rho.clone());
        l0 = l1;
    }
    Ok(Trajectory { grid, states, records })
}
