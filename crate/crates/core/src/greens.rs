//! Two-time propagator, correlation Green functions and lesser Green
//! functions.
//!
//! The propagator solves the Dyson integro-differential equation
//! `u̇(t, s) + i ε(t) u(t, s) + ∫_s^t g(t, τ) u(τ, s) dτ = 0`, `u(s, s) = 1`,
//! once per start node `s`, with a trapezoid predictor-corrector (Heun)
//! scheme whose memory integral uses the composite trapezoid rule.

use rayon::prelude::*;

pub use crate::grid::TimeGrid;

use crate::error::{Error, Result};
use crate::kernels::{
    sb_boundary_nu, sb_boundary_v, DressedCouplings, MemoryKernelTable, NoiseAmplitudes, PhaseTable,
};
use crate::linalg::{self, block_to_mat, c, CMat, C64, I, ZERO};
use crate::model::{
    initial_correlations, GaussianInitialData, InitialStateSpec, ModelSpec, SampledModel, Statistics,
};

/// Smallest admissible `sigma_min / max(sigma_max, 1)` of `u(t, t0)`.
pub const SINGULARITY_THRESHOLD: f64 = 1e-8;

/// How the two-time propagator rows are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DysonStrategy {
    /// Reuse the `t0` row for every start node when the model has no time
    /// dependence (the discrete scheme is then translation invariant).
    #[default]
    Auto,
    /// Solve every start row separately.
    General,
}

/// One solved start row: `u(t_n, t_m)` and `u̇(t_n, t_m)` for `n >= m`.
#[derive(Debug, Clone)]
pub struct DysonRow {
    pub start: usize,
    pub u: Vec<C64>,
    pub du: Vec<C64>,
}

/// Marches the Dyson equation from start node `m` to the end of the grid.
pub fn solve_dyson(model: &SampledModel, kernel: &MemoryKernelTable, m: usize) -> Result<DysonRow> {
    let steps = model.grid.steps;
    if m > steps {
        return Err(Error::Argument(format!("start index {m} beyond grid end {steps}")));
    }
    let n = model.n_sys;
    let nn = n * n;
    let h = model.grid.step();
    let len = steps - m + 1;
    let mut u = vec![ZERO; len * nn];
    let mut du = vec![ZERO; len * nn];
    u[..nn].copy_from_slice(&linalg::identity_block(n));
    let mut pred = vec![ZERO; nn];
    let mut f_pred = vec![ZERO; nn];

    for local in 0..len {
        let node = m + local;
        // u̇ at this node from the converged value.
        {
            let (done, _) = u.split_at(len * nn);
            let mut f = vec![ZERO; nn];
            let u_node = &done[local * nn..(local + 1) * nn];
            linalg::gemm_acc(&mut f, model.eps_sys_node(node), u_node, n, n, n, -I);
            if local > 0 {
                for j in 0..=local {
                    let w = if j == 0 || j == local { 0.5 * h } else { h };
                    linalg::gemm_acc(
                        &mut f,
                        kernel.get(node, m + j),
                        &done[j * nn..(j + 1) * nn],
                        n,
                        n,
                        n,
                        c(-w, 0.0),
                    );
                }
            }
            du[local * nn..(local + 1) * nn].copy_from_slice(&f);
        }
        if node == steps {
            break;
        }
        let next = node + 1;
        let f_node = du[local * nn..(local + 1) * nn].to_vec();
        // Predictor: explicit Euler step.
        pred.copy_from_slice(&u[local * nn..(local + 1) * nn]);
        linalg::axpy(&mut pred, c(h, 0.0), &f_node);
        // Corrector: trapezoid weight h/2 on the new node.
        f_pred.iter_mut().for_each(|z| *z = ZERO);
        linalg::gemm_acc(&mut f_pred, model.eps_sys_node(next), &pred, n, n, n, -I);
        for j in 0..=local {
            let w = if j == 0 { 0.5 * h } else { h };
            linalg::gemm_acc(
                &mut f_pred,
                kernel.get(next, m + j),
                &u[j * nn..(j + 1) * nn],
                n,
                n,
                n,
                c(-w, 0.0),
            );
        }
        linalg::gemm_acc(&mut f_pred, kernel.get(next, next), &pred, n, n, n, c(-0.5 * h, 0.0));
        let (head, tail) = u.split_at_mut((local + 1) * nn);
        let new = &mut tail[..nn];
        new.copy_from_slice(&head[local * nn..]);
        linalg::axpy(new, c(0.5 * h, 0.0), &f_node);
        linalg::axpy(new, c(0.5 * h, 0.0), &f_pred);
    }
    Ok(DysonRow { start: m, u, du })
}

/// Propagator `u(t_n, t_m)` for every `m <= n`, plus `u̇(t_n, t0)`.
#[derive(Debug, Clone)]
pub struct TwoTimeField {
    pub grid: TimeGrid,
    pub n_sys: usize,
    shared_row: bool,
    rows: Vec<Vec<C64>>,
    du0: Vec<C64>,
}

impl TwoTimeField {
    pub fn solve(model: &SampledModel, kernel: &MemoryKernelTable, strategy: DysonStrategy) -> Result<Self> {
        let steps = model.grid.steps;
        let shared_row = strategy == DysonStrategy::Auto && model.stationary;
        let (rows, du0) = if shared_row {
            let row = solve_dyson(model, kernel, 0)?;
            (vec![row.u], row.du)
        } else {
            let mut solved: Vec<DysonRow> = (0..=steps)
                .into_par_iter()
                .map(|m| solve_dyson(model, kernel, m))
                .collect::<Result<_>>()?;
            let du0 = std::mem::take(&mut solved[0].du);
            (solved.into_iter().map(|r| r.u).collect(), du0)
        };
        Ok(Self { grid: model.grid, n_sys: model.n_sys, shared_row, rows, du0 })
    }

    /// `u(t_n, t_m)` as a flat block, `m <= n`.
    #[inline]
    pub fn u(&self, n: usize, m: usize) -> &[C64] {
        debug_assert!(m <= n);
        let nn = self.n_sys * self.n_sys;
        let (row, idx) = if self.shared_row { (0, n - m) } else { (m, n - m) };
        &self.rows[row][idx * nn..(idx + 1) * nn]
    }

    pub fn u_mat(&self, n: usize, m: usize) -> CMat {
        block_to_mat(self.u(n, m), self.n_sys, self.n_sys)
    }

    /// `u̇(t_n, t0)` from the right-hand side of the Dyson equation.
    pub fn du0_mat(&self, n: usize) -> CMat {
        let nn = self.n_sys * self.n_sys;
        block_to_mat(&self.du0[n * nn..(n + 1) * nn], self.n_sys, self.n_sys)
    }

    pub fn shares_rows(&self) -> bool {
        self.shared_row
    }
}

/// `u̇(t_n, t0) u(t_n, t0)^{-1}`, evaluated from the Dyson right-hand side.
pub fn log_derivative(field: &TwoTimeField, n: usize) -> Result<CMat> {
    if n > field.grid.steps {
        return Err(Error::Argument(format!("time index {n} beyond grid end {}", field.grid.steps)));
    }
    let u = field.u_mat(n, 0);
    let sv = linalg::singular_values(&u);
    let (smax, smin) = (sv[0], *sv.last().unwrap());
    let ratio = smin / smax.max(1.0);
    if !(ratio >= SINGULARITY_THRESHOLD) {
        return Err(Error::SingularPropagator { t: field.grid.time(n), index: n, ratio });
    }
    let inv = u
        .try_inverse()
        .ok_or(Error::SingularPropagator { t: field.grid.time(n), index: n, ratio })?;
    Ok(field.du0_mat(n) * inv)
}

/// Particle correlation Green function `v(τ, t)` at grid indices.
///
/// The bath-bath double integral factorizes through the noise amplitudes:
/// `∫∫ u(τ,τ1) g̃^{bb}(τ1,τ2) u(t,τ2)^H = W(τ) C0_bb W(t)^H` exactly at the
/// level of the trapezoid sums.
pub fn correlation_v(
    field: &TwoTimeField,
    amps: &NoiseAmplitudes,
    init: &GaussianInitialData,
    tau: usize,
    t: usize,
) -> Result<CMat> {
    let sb = sb_boundary_v(field, amps, init, tau, t)?;
    if init.n_modes() == 0 {
        return Ok(sb);
    }
    Ok(amps.mat(tau) * init.c_bb() * amps.mat(t).adjoint() + sb)
}

/// Pair correlation Green function `ν(τ, t)`.
pub fn correlation_nu(
    field: &TwoTimeField,
    amps: &NoiseAmplitudes,
    init: &GaussianInitialData,
    statistics: Statistics,
    tau: usize,
    t: usize,
) -> Result<CMat> {
    let sb = sb_boundary_nu(field, amps, init, statistics, tau, t)?;
    if init.n_modes() == 0 {
        return Ok(sb);
    }
    Ok(amps.mat(tau) * init.p_bb() * amps.mat(t).transpose() + sb)
}

/// Which factor closes the double integral on the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightFactor {
    /// `u(t, τ2)^H`, for `v`.
    Adjoint,
    /// `u(t, τ2)^T`, for `ν`.
    Transpose,
}

/// Direct double trapezoid `Σ_a Σ_b w_a w_b u(τ, τ_a) K(τ_a, τ_b) R(u(t, τ_b))`
/// over a square kernel table (`table[(a * len + b)]` is an `N x N` block).
pub fn double_trapezoid(
    field: &TwoTimeField,
    table: &[C64],
    tau: usize,
    t: usize,
    right: RightFactor,
) -> CMat {
    let n = field.n_sys;
    let nn = n * n;
    let len = field.grid.len();
    let grid = field.grid;
    let mut inner = vec![ZERO; nn];
    let mut out = vec![ZERO; nn];
    for b in 0..=t {
        let wb = grid.trapezoid_weight(b, 0, t);
        if wb == 0.0 {
            continue;
        }
        inner.iter_mut().for_each(|z| *z = ZERO);
        for a in 0..=tau {
            let wa = grid.trapezoid_weight(a, 0, tau);
            if wa == 0.0 {
                continue;
            }
            let k = &table[(a * len + b) * nn..(a * len + b + 1) * nn];
            linalg::gemm_acc(&mut inner, field.u(tau, a), k, n, n, n, c(wa, 0.0));
        }
        match right {
            RightFactor::Adjoint => {
                linalg::gemm_acc_adj(&mut out, &inner, field.u(t, b), n, n, n, c(wb, 0.0))
            }
            RightFactor::Transpose => {
                linalg::gemm_acc_tr(&mut out, &inner, field.u(t, b), n, n, n, c(wb, 0.0))
            }
        }
    }
    block_to_mat(&out, n, n)
}

/// Derivative along the equal-time diagonal, second order everywhere.
#[derive(Debug, Clone)]
pub struct DiagonalDerivative {
    pub values: Vec<CMat>,
    /// `max |D_h - D_2h|` over interior nodes: the centered difference with
    /// step `h` against the one with step `2h`; `None` on grids with fewer
    /// than four steps.
    pub richardson_defect: Option<f64>,
}

pub fn equal_time_derivative(diag: &[CMat], h: f64) -> Result<DiagonalDerivative> {
    let len = diag.len();
    if len < 3 {
        return Err(Error::Argument(format!(
            "second-order differences need at least 3 diagonal samples, got {len}"
        )));
    }
    let inv2h = c(0.5 / h, 0.0);
    let mut values = Vec::with_capacity(len);
    values.push((&diag[1] * c(4.0, 0.0) - &diag[0] * c(3.0, 0.0) - &diag[2]) * inv2h);
    for k in 1..len - 1 {
        values.push((&diag[k + 1] - &diag[k - 1]) * inv2h);
    }
    values.push(
        (&diag[len - 1] * c(3.0, 0.0) - &diag[len - 2] * c(4.0, 0.0) + &diag[len - 3]) * inv2h,
    );
    let richardson_defect = if len >= 5 {
        let inv4h = c(0.25 / h, 0.0);
        (2..len - 2)
            .map(|k| linalg::max_abs(&(&values[k] - (&diag[k + 2] - &diag[k - 2]) * inv4h)))
            .reduce(f64::max)
    } else {
        None
    };
    Ok(DiagonalDerivative { values, richardson_defect })
}

/// Equal-time correlation Green functions and their time derivatives.
#[derive(Debug, Clone)]
pub struct CorrelationPair {
    pub v_diag: Vec<CMat>,
    pub nu_diag: Vec<CMat>,
    pub vdot_diag: Vec<CMat>,
    pub nudot_diag: Vec<CMat>,
    pub v_richardson: Option<f64>,
    pub nu_richardson: Option<f64>,
}

impl CorrelationPair {
    pub fn new(
        field: &TwoTimeField,
        amps: &NoiseAmplitudes,
        init: &GaussianInitialData,
        statistics: Statistics,
    ) -> Result<Self> {
        let len = field.grid.len();
        let v_diag: Vec<CMat> = (0..len)
            .into_par_iter()
            .map(|k| correlation_v(field, amps, init, k, k))
            .collect::<Result<_>>()?;
        let nu_diag: Vec<CMat> = (0..len)
            .into_par_iter()
            .map(|k| correlation_nu(field, amps, init, statistics, k, k))
            .collect::<Result<_>>()?;
        let (vdot_diag, nudot_diag, v_richardson, nu_richardson) = equal_time_derivatives(&v_diag, &nu_diag, field.grid.step())?;
        Ok(Self { v_diag, nu_diag, vdot_diag, nudot_diag, v_richardson, nu_richardson })
    }
}

/// `(v̇(t,t), ν̇(t,t))` with their Richardson consistency defects.
#[allow(clippy::type_complexity)]
pub fn equal_time_derivatives(
    v_diag: &[CMat],
    nu_diag: &[CMat],
    h: f64,
) -> Result<(Vec<CMat>, Vec<CMat>, Option<f64>, Option<f64>)> {
    let dv = equal_time_derivative(v_diag, h)?;
    let dnu = equal_time_derivative(nu_diag, h)?;
    Ok((dv.values, dnu.values, dv.richardson_defect, dnu.richardson_defect))
}

/// Lesser Green functions at `(τ, t)`:
/// `G< = u(τ) G<(t0,t0) u(t)^H + i v(τ,t)` with `G<(t0,t0) = i C0_ss`, and
/// `Ḡ< = u(τ) Ḡ<(t0,t0) u(t)^T + i ν(τ,t)` with `Ḡ<(t0,t0) = i P0_ss`.
///
/// Index convention: `G<_ij(τ, t) = i ⟨a†_j(t) a_i(τ)⟩`.
pub fn lesser_green(
    field: &TwoTimeField,
    amps: &NoiseAmplitudes,
    init: &GaussianInitialData,
    statistics: Statistics,
    tau: usize,
    t: usize,
) -> Result<(CMat, CMat)> {
    let u_tau = field.u_mat(tau, 0);
    let u_t = field.u_mat(t, 0);
    let v = correlation_v(field, amps, init, tau, t)?;
    let nu = correlation_nu(field, amps, init, statistics, tau, t)?;
    let g = (&u_tau * init.c_ss() * u_t.adjoint() + v) * I;
    let gbar = (&u_tau * init.p_ss() * u_t.transpose() + nu) * I;
    Ok((g, gbar))
}

/// Options for [`GreensSolution::solve`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GreensOptions {
    pub strategy: DysonStrategy,
}

/// Everything the master-equation layer needs from the Green functions.
#[derive(Debug, Clone)]
pub struct GreensSolution {
    pub model: SampledModel,
    pub phases: PhaseTable,
    pub dressed: DressedCouplings,
    pub kernel: MemoryKernelTable,
    pub field: TwoTimeField,
    pub amps: NoiseAmplitudes,
    pub init: GaussianInitialData,
    pub corr: CorrelationPair,
}

impl GreensSolution {
    pub fn solve(
        spec: &ModelSpec,
        init_spec: &InitialStateSpec,
        grid: &TimeGrid,
        options: GreensOptions,
    ) -> Result<Self> {
        let model = SampledModel::new(spec, grid)?;
        let init = initial_correlations(spec, init_spec, grid.t0)?;
        Self::from_parts(model, init, options)
    }

    pub fn from_parts(model: SampledModel, init: GaussianInitialData, options: GreensOptions) -> Result<Self> {
        if init.n_sys != model.n_sys || init.n_modes() != model.n_modes {
            return Err(Error::Shape(format!(
                "initial data for {}+{} modes do not match model with {}+{}",
                init.n_sys,
                init.n_modes(),
                model.n_sys,
                model.n_modes
            )));
        }
        let phases = PhaseTable::new(&model);
        let dressed = DressedCouplings::new(&model, &phases);
        let kernel = MemoryKernelTable::new(&model, &dressed, options.strategy == DysonStrategy::General);
        let field = TwoTimeField::solve(&model, &kernel, options.strategy)?;
        let amps = NoiseAmplitudes::new(&field, &dressed);
        let corr = CorrelationPair::new(&field, &amps, &init, model.statistics)?;
        Ok(Self { model, phases, dressed, kernel, field, amps, init, corr })
    }

    pub fn statistics(&self) -> Statistics {
        self.model.statistics
    }

    pub fn log_derivatives(&self) -> Result<Vec<CMat>> {
        (0..self.field.grid.len())
            .into_par_iter()
            .map(|k| log_derivative(&self.field, k))
            .collect()
    }

    /// Equal-time `G<(t_n, t_n)` and `Ḡ<(t_n, t_n)`.
    pub fn lesser_diag(&self, n: usize) -> Result<(CMat, CMat)> {
        lesser_green(&self.field, &self.amps, &self.init, self.statistics(), n, n)
    }
}
