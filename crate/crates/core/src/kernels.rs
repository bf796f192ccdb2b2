//! Memory kernel and initial-correlation kernels.
//!
//! Every kernel is a sum over reservoir modes of products of the dressed
//! couplings `y_iq(t) = V_iq(t) exp(-i φ_q(t))`, `φ_q(t) = ∫_{t0}^t ε_q`.
//! The system-bath kernels carry a `δ(τ2 - t0)` factor; they are never
//! sampled. Their contribution to `v` and `ν` collapses to a single time
//! integral, returned by [`sb_boundary_v`] and [`sb_boundary_nu`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greens::TwoTimeField;
use crate::linalg::{self, block_to_mat, c, CMat, C64, I, ZERO};
use crate::model::{GaussianInitialData, SampledModel, Statistics, ThermalBath};

/// `φ_q(t_n)` for every mode, composite trapezoid on the grid nodes.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub n_modes: usize,
    phi: Vec<f64>,
}

impl PhaseTable {
    pub fn new(model: &SampledModel) -> Self {
        let k = model.n_modes;
        let steps = model.grid.steps;
        let h = model.grid.step();
        let mut phi = vec![0.0; (steps + 1) * k];
        for n in 1..=steps {
            let prev = model.mode_energies_half(2 * (n - 1));
            let cur = model.mode_energies_half(2 * n);
            for q in 0..k {
                phi[n * k + q] = phi[(n - 1) * k + q] + 0.5 * h * (prev[q] + cur[q]);
            }
        }
        Self { n_modes: k, phi }
    }

    pub fn at(&self, n: usize) -> &[f64] {
        &self.phi[n * self.n_modes..(n + 1) * self.n_modes]
    }
}

/// `y(t_n) = V(t_n) diag(exp(-i φ(t_n)))`, `N x K` column-major per node.
#[derive(Debug, Clone)]
pub struct DressedCouplings {
    pub n_sys: usize,
    pub n_modes: usize,
    y: Vec<C64>,
}

impl DressedCouplings {
    pub fn new(model: &SampledModel, phases: &PhaseTable) -> Self {
        let (n, k) = (model.n_sys, model.n_modes);
        let mut y = Vec::with_capacity((model.grid.steps + 1) * n * k);
        for t in 0..=model.grid.steps {
            let v = model.coupling_node(t);
            let phi = phases.at(t);
            for q in 0..k {
                let phase = C64::from_polar(1.0, -phi[q]);
                y.extend(v[q * n..(q + 1) * n].iter().map(|x| x * phase));
            }
        }
        Self { n_sys: n, n_modes: k, y }
    }

    pub fn at(&self, t: usize) -> &[C64] {
        let nk = self.n_sys * self.n_modes;
        &self.y[t * nk..(t + 1) * nk]
    }
}

fn check_order(model: &SampledModel, t: usize, tau: usize) -> Result<()> {
    if t > model.grid.steps {
        return Err(Error::Argument(format!("time index {t} beyond grid end {}", model.grid.steps)));
    }
    if tau > t {
        return Err(Error::Argument(format!(
            "memory kernel needs tau <= t, got tau index {tau} > t index {t}"
        )));
    }
    Ok(())
}

fn check_range(model: &SampledModel, idx: &[usize]) -> Result<()> {
    match idx.iter().find(|&&i| i > model.grid.steps) {
        Some(i) => Err(Error::Argument(format!("time index {i} beyond grid end {}", model.grid.steps))),
        None => Ok(()),
    }
}

/// Memory kernel `g_ij(t, τ) = Σ_q V_iq(t) V*_jq(τ) exp(-i[φ_q(t) - φ_q(τ)])`
/// at grid indices `t >= tau`.
pub fn memory_kernel(model: &SampledModel, phases: &PhaseTable, t: usize, tau: usize) -> Result<CMat> {
    check_order(model, t, tau)?;
    let n = model.n_sys;
    let (vt, vs) = (model.coupling_node(t), model.coupling_node(tau));
    let (pt, ps) = (phases.at(t), phases.at(tau));
    let mut g = CMat::zeros(n, n);
    for q in 0..model.n_modes {
        let phase = C64::from_polar(1.0, -(pt[q] - ps[q]));
        for j in 0..n {
            for i in 0..n {
                g[(i, j)] += vt[i + q * n] * vs[j + q * n].conj() * phase;
            }
        }
    }
    Ok(g)
}

/// `g̃^{bb}(τ1, τ2)`: bath-bath part of the particle correlation kernel,
/// built from the bath block `⟨b†_{q'} b_q⟩` of `C0`.
pub fn particle_kernel_bb(
    model: &SampledModel,
    phases: &PhaseTable,
    init: &GaussianInitialData,
    tau1: usize,
    tau2: usize,
) -> Result<CMat> {
    check_range(model, &[tau1, tau2])?;
    let n = model.n_sys;
    let k = model.n_modes;
    let (v1, v2) = (model.coupling_node(tau1), model.coupling_node(tau2));
    let (p1, p2) = (phases.at(tau1), phases.at(tau2));
    let mut g = CMat::zeros(n, n);
    for q in 0..k {
        for qp in 0..k {
            let occ = init.c0[(n + q, n + qp)];
            if occ == ZERO {
                continue;
            }
            let phase = C64::from_polar(1.0, -p1[q] + p2[qp]);
            for j in 0..n {
                for i in 0..n {
                    g[(i, j)] += v1[i + q * n] * v2[j + qp * n].conj() * phase * occ;
                }
            }
        }
    }
    Ok(g)
}

/// `ḡ^{bb}(τ1, τ2)`: bath-bath part of the pair correlation kernel, built
/// from `⟨b_{q'} b_q⟩`; note the overall minus sign.
pub fn pair_kernel_bb(
    model: &SampledModel,
    phases: &PhaseTable,
    init: &GaussianInitialData,
    tau1: usize,
    tau2: usize,
) -> Result<CMat> {
    check_range(model, &[tau1, tau2])?;
    let n = model.n_sys;
    let k = model.n_modes;
    let (v1, v2) = (model.coupling_node(tau1), model.coupling_node(tau2));
    let (p1, p2) = (phases.at(tau1), phases.at(tau2));
    let mut g = CMat::zeros(n, n);
    for q in 0..k {
        for qp in 0..k {
            let pair = init.p0[(n + q, n + qp)];
            if pair == ZERO {
                continue;
            }
            let phase = C64::from_polar(1.0, -p1[q] - p2[qp]);
            for j in 0..n {
                for i in 0..n {
                    g[(i, j)] -= v1[i + q * n] * v2[j + qp * n] * phase * pair;
                }
            }
        }
    }
    Ok(g)
}

/// Closed-form particle kernel of thermal reservoirs decoupled from the
/// system: `Σ_q V_iq(τ) V*_jq(τ') exp(-i ∫_{τ'}^{τ} ε_q) f(ε_q(t0))`.
pub fn thermal_bath_kernel(
    model: &SampledModel,
    phases: &PhaseTable,
    baths: &[ThermalBath],
    mode_reservoir: &[usize],
    tau: usize,
    tau_p: usize,
) -> Result<CMat> {
    check_range(model, &[tau, tau_p])?;
    let n = model.n_sys;
    let (v1, v2) = (model.coupling_node(tau), model.coupling_node(tau_p));
    let (p1, p2) = (phases.at(tau), phases.at(tau_p));
    let e0 = model.mode_energies_half(0);
    let mut g = CMat::zeros(n, n);
    for q in 0..model.n_modes {
        let bath = baths[mode_reservoir[q]];
        let f = model.statistics.occupation(bath.beta, e0[q] - bath.mu);
        let phase = C64::from_polar(1.0, -(p1[q] - p2[q]));
        for j in 0..n {
            for i in 0..n {
                g[(i, j)] += v1[i + q * n] * v2[j + q * n].conj() * phase * f;
            }
        }
    }
    Ok(g)
}

/// Memory kernel sampled at every `(t_n, t_j)`, `j <= n`.
///
/// Stationary models only need the lag `n - j`, so the table stores
/// `O(T)` blocks instead of `O(T^2)`.
#[derive(Debug, Clone)]
pub struct MemoryKernelTable {
    pub n_sys: usize,
    lag_only: bool,
    blocks: Vec<C64>,
}

impl MemoryKernelTable {
    pub fn new(model: &SampledModel, dressed: &DressedCouplings, force_full: bool) -> Self {
        let n = model.n_sys;
        let k = model.n_modes;
        let nn = n * n;
        let steps = model.grid.steps;
        let lag_only = model.stationary && !force_full;
        let blocks = if lag_only {
            let y0 = dressed.at(0);
            let mut blocks = vec![ZERO; (steps + 1) * nn];
            blocks.par_chunks_mut(nn).enumerate().for_each(|(lag, out)| {
                linalg::gemm_acc_adj(out, dressed.at(lag), y0, n, k, n, c(1.0, 0.0));
            });
            blocks
        } else {
            let total = (steps + 1) * (steps + 2) / 2;
            let mut blocks = vec![ZERO; total * nn];
            // Row t occupies blocks [t(t+1)/2, t(t+1)/2 + t].
            let mut rows: Vec<&mut [C64]> = Vec::with_capacity(steps + 1);
            let mut rest = blocks.as_mut_slice();
            for t in 0..=steps {
                let (row, tail) = rest.split_at_mut((t + 1) * nn);
                rows.push(row);
                rest = tail;
            }
            rows.into_par_iter().enumerate().for_each(|(t, row)| {
                let yt = dressed.at(t);
                for (j, out) in row.chunks_mut(nn).enumerate() {
                    linalg::gemm_acc_adj(out, yt, dressed.at(j), n, k, n, c(1.0, 0.0));
                }
            });
            blocks
        };
        Self { n_sys: n, lag_only, blocks }
    }

    /// `g(t_t, t_j)` as a flat block; requires `j <= t`.
    #[inline]
    pub fn get(&self, t: usize, j: usize) -> &[C64] {
        debug_assert!(j <= t);
        let nn = self.n_sys * self.n_sys;
        let idx = if self.lag_only { t - j } else { t * (t + 1) / 2 + j };
        &self.blocks[idx * nn..(idx + 1) * nn]
    }

    pub fn is_lag_only(&self) -> bool {
        self.lag_only
    }
}

/// Sampled kernels on the full grid: `g` on the triangle, `g̃^{bb}` and
/// `ḡ^{bb}` on the square. Used by the reference double-quadrature route.
#[derive(Debug, Clone)]
pub struct KernelSamples {
    pub n_sys: usize,
    pub len: usize,
    pub g: MemoryKernelTable,
    gtil_bb: Vec<C64>,
    gbar_bb: Vec<C64>,
}

impl KernelSamples {
    pub fn new(
        model: &SampledModel,
        dressed: &DressedCouplings,
        init: &GaussianInitialData,
    ) -> Self {
        let n = model.n_sys;
        let k = model.n_modes;
        let nn = n * n;
        let len = model.grid.steps + 1;
        let g = MemoryKernelTable::new(model, dressed, true);
        let c_bb = init.c_bb();
        let p_bb = init.p_bb();
        // z(τ) = y(τ) C_bb, w(τ) = y(τ) P_bb; the kernels are z(τ1) y(τ2)^H and
        // -w(τ1) y(τ2)^T.
        let z: Vec<Vec<C64>> = (0..len)
            .map(|t| (block_to_mat(dressed.at(t), n, k) * &c_bb).as_slice().to_vec())
            .collect();
        let w: Vec<Vec<C64>> = (0..len)
            .map(|t| (block_to_mat(dressed.at(t), n, k) * &p_bb).as_slice().to_vec())
            .collect();
        let mut gtil_bb = vec![ZERO; len * len * nn];
        let mut gbar_bb = vec![ZERO; len * len * nn];
        gtil_bb
            .par_chunks_mut(len * nn)
            .zip(gbar_bb.par_chunks_mut(len * nn))
            .enumerate()
            .for_each(|(t1, (row_til, row_bar))| {
                for t2 in 0..len {
                    let y2 = dressed.at(t2);
                    linalg::gemm_acc_adj(&mut row_til[t2 * nn..(t2 + 1) * nn], &z[t1], y2, n, k, n, c(1.0, 0.0));
                    linalg::gemm_acc_tr(&mut row_bar[t2 * nn..(t2 + 1) * nn], &w[t1], y2, n, k, n, c(-1.0, 0.0));
                }
            });
        Self { n_sys: n, len, g, gtil_bb, gbar_bb }
    }

    pub fn gtil_bb(&self, t1: usize, t2: usize) -> &[C64] {
        let nn = self.n_sys * self.n_sys;
        let idx = t1 * self.len + t2;
        &self.gtil_bb[idx * nn..(idx + 1) * nn]
    }

    pub fn gbar_bb(&self, t1: usize, t2: usize) -> &[C64] {
        let nn = self.n_sys * self.n_sys;
        let idx = t1 * self.len + t2;
        &self.gbar_bb[idx * nn..(idx + 1) * nn]
    }
}

/// Noise amplitudes `W(t) = -i ∫_{t0}^{t} u(t, τ) y(τ) dτ` (`N x K`), the
/// coefficient of `b(t0)` in the fluctuation operator of the Langevin
/// solution. Every correlation Green function factorizes through them.
#[derive(Debug, Clone)]
pub struct NoiseAmplitudes {
    pub n_sys: usize,
    pub n_modes: usize,
    w: Vec<C64>,
}

impl NoiseAmplitudes {
    pub fn new(field: &TwoTimeField, dressed: &DressedCouplings) -> Self {
        let n = field.n_sys;
        let k = dressed.n_modes;
        let nk = n * k;
        let grid = field.grid;
        let mut w = vec![ZERO; grid.len() * nk];
        if nk > 0 {
            w.par_chunks_mut(nk).enumerate().for_each(|(t, out)| {
                for a in 0..=t {
                    let weight = grid.trapezoid_weight(a, 0, t);
                    if weight == 0.0 {
                        continue;
                    }
                    linalg::gemm_acc(out, field.u(t, a), dressed.at(a), n, n, k, -I * weight);
                }
            });
        }
        Self { n_sys: n, n_modes: k, w }
    }

    pub fn at(&self, t: usize) -> &[C64] {
        let nk = self.n_sys * self.n_modes;
        &self.w[t * nk..(t + 1) * nk]
    }

    pub fn mat(&self, t: usize) -> CMat {
        block_to_mat(self.at(t), self.n_sys, self.n_modes)
    }

    pub fn len(&self) -> usize {
        if self.n_sys * self.n_modes == 0 {
            0
        } else {
            self.w.len() / (self.n_sys * self.n_modes)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_rows(field: &TwoTimeField, idx: &[usize]) -> Result<()> {
    match idx.iter().find(|&&i| i > field.grid.steps) {
        Some(i) => Err(Error::State(format!(
            "propagator rows available up to index {}, requested {i}",
            field.grid.steps
        ))),
        None => Ok(()),
    }
}

/// Collapsed contribution of `g̃^{sb}` to `v(τ, t)`.
///
/// The δ at `τ2 = t0` is taken with full weight, giving
/// `W(τ) C0_bs u(t, t0)^H + u(τ, t0) C0_sb W(t)^H`.
pub fn sb_boundary_v(
    field: &TwoTimeField,
    amps: &NoiseAmplitudes,
    init: &GaussianInitialData,
    tau: usize,
    t: usize,
) -> Result<CMat> {
    check_rows(field, &[tau, t])?;
    let n = field.n_sys;
    if init.n_modes() == 0 {
        return Ok(CMat::zeros(n, n));
    }
    let u_tau = field.u_mat(tau, 0);
    let u_t = field.u_mat(t, 0);
    Ok(amps.mat(tau) * init.c_bs() * u_t.adjoint() + u_tau * init.c_sb() * amps.mat(t).adjoint())
}

/// Collapsed contribution of `ḡ^{sb}` to `ν(τ, t)`:
/// `W(τ) P0_bs u(t, t0)^T ± u(τ, t0) [W(t) P0_bs]^T`.
pub fn sb_boundary_nu(
    field: &TwoTimeField,
    amps: &NoiseAmplitudes,
    init: &GaussianInitialData,
    statistics: Statistics,
    tau: usize,
    t: usize,
) -> Result<CMat> {
    check_rows(field, &[tau, t])?;
    let n = field.n_sys;
    if init.n_modes() == 0 {
        return Ok(CMat::zeros(n, n));
    }
    let p_bs = init.p_bs();
    let first = amps.mat(tau) * &p_bs * field.u_mat(t, 0).transpose();
    let second = field.u_mat(tau, 0) * (amps.mat(t) * &p_bs).transpose();
    Ok(first + second * c(statistics.sign(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::linalg::max_abs;
    use crate::model::{Mode, ModelSpec, Reservoir, Schedule};

    fn sampled(spec: &ModelSpec, t1: f64, steps: usize) -> SampledModel {
        SampledModel::new(spec, &TimeGrid::new(0.0, t1, steps).unwrap()).unwrap()
    }

    fn single(v: f64, eb: f64) -> ModelSpec {
        ModelSpec::new(Statistics::Fermion, &CMat::zeros(1, 1))
            .with_reservoir(Reservoir { modes: vec![Mode::constant(eb, &[c(v, 0.0)])] })
    }

    #[test]
    fn zero_coupling_gives_zero_kernel() {
        let m = sampled(&single(0.0, 1.0), 2.0, 20);
        let p = PhaseTable::new(&m);
        assert_eq!(max_abs(&memory_kernel(&m, &p, 15, 3).unwrap()), 0.0);
    }

    #[test]
    fn constant_single_mode_kernel() {
        let m = sampled(&single(0.3, 1.0), 4.0, 40);
        let p = PhaseTable::new(&m);
        // t - τ = 2
        let g = memory_kernel(&m, &p, 30, 10).unwrap();
        let expected = C64::from_polar(0.09, -2.0);
        assert!((g[(0, 0)] - expected).norm() < 1e-14);
        assert!(memory_kernel(&m, &p, 10, 30).is_err());
    }

    #[test]
    fn table_matches_direct_kernel() {
        let spec = ModelSpec::new(Statistics::Boson, &CMat::identity(2, 2))
            .with_reservoir(Reservoir::uniform_band(5, -1.0, 2.0, 0.4, &[c(1.0, 0.0), c(0.3, -0.2)]));
        let m = sampled(&spec, 2.0, 16);
        let p = PhaseTable::new(&m);
        let d = DressedCouplings::new(&m, &p);
        let lag = MemoryKernelTable::new(&m, &d, false);
        let full = MemoryKernelTable::new(&m, &d, true);
        assert!(lag.is_lag_only());
        for t in [0, 5, 16] {
            for j in 0..=t {
                let direct = memory_kernel(&m, &p, t, j).unwrap();
                assert!(max_abs(&(block_to_mat(full.get(t, j), 2, 2) - &direct)) < 1e-13);
                assert!(max_abs(&(block_to_mat(lag.get(t, j), 2, 2) - &direct)) < 1e-13);
            }
        }
    }

    #[test]
    fn time_dependent_phase_converges_to_quadrature() {
        // ε_b(t) = sin t, so φ(t) = 1 - cos t.
        let t1 = 3.0;
        let fine = 3000;
        let samples: Vec<f64> = (0..=fine).map(|k| (t1 * k as f64 / fine as f64).sin()).collect();
        let mut spec = single(0.4, 0.0);
        spec.reservoirs[0].modes[0].energy =
            Schedule::Tabulated { start: 0.0, step: t1 / fine as f64, samples };
        let m = sampled(&spec, t1, 300);
        let p = PhaseTable::new(&m);
        let g = memory_kernel(&m, &p, 300, 100).unwrap();
        let (t, tau) = (3.0_f64, 1.0_f64);
        let expected = C64::from_polar(0.16, -((1.0 - t.cos()) - (1.0 - tau.cos())));
        assert!((g[(0, 0)] - expected).norm() < 1e-4);
    }

    #[test]
    fn single_mode_particle_and_pair_kernels() {
        let spec = single(0.5, 0.8);
        let m = sampled(&spec, 2.0, 20);
        let p = PhaseTable::new(&m);
        let mut c0 = CMat::zeros(2, 2);
        c0[(1, 1)] = c(0.3, 0.0);
        let mut p0 = CMat::zeros(2, 2);
        p0[(1, 1)] = c(0.2, 0.1);
        let init = GaussianInitialData { n_sys: 1, c0, p0 };
        let (t1, t2) = (15, 4);
        let (tau1, tau2) = (m.grid.time(t1), m.grid.time(t2));
        let g = particle_kernel_bb(&m, &p, &init, t1, t2).unwrap();
        let expected = C64::from_polar(0.25 * 0.3, -0.8 * (tau1 - tau2));
        assert!((g[(0, 0)] - expected).norm() < 1e-14);
        let gb = pair_kernel_bb(&m, &p, &init, t1, t2).unwrap();
        let expected = -c(0.2, 0.1) * 0.25 * C64::from_polar(1.0, -0.8 * (tau1 + tau2));
        assert!((gb[(0, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn sampled_kernels_match_pointwise_kernels() {
        let spec = ModelSpec::new(Statistics::Boson, &(CMat::identity(2, 2) * c(1.0, 0.0)))
            .with_reservoir(Reservoir::uniform_band(3, 0.5, 1.5, 0.3, &[c(1.0, 0.0), c(0.5, 0.5)]));
        let m = sampled(&spec, 1.0, 6);
        let p = PhaseTable::new(&m);
        let d = DressedCouplings::new(&m, &p);
        let dim = 5;
        let mut c0 = CMat::zeros(dim, dim);
        let mut p0 = CMat::zeros(dim, dim);
        for a in 2..dim {
            for b in 2..dim {
                c0[(a, b)] = c(0.1 / (1.0 + (a + b) as f64), 0.02 * (a as f64 - b as f64));
                p0[(a, b)] = c(0.05 * (a * b) as f64, 0.01);
            }
        }
        let init = GaussianInitialData { n_sys: 2, c0, p0 };
        let ks = KernelSamples::new(&m, &d, &init);
        for (t1, t2) in [(0, 0), (3, 5), (6, 1)] {
            let a = particle_kernel_bb(&m, &p, &init, t1, t2).unwrap();
            assert!(max_abs(&(block_to_mat(ks.gtil_bb(t1, t2), 2, 2) - a)) < 1e-14);
            let b = pair_kernel_bb(&m, &p, &init, t1, t2).unwrap();
            assert!(max_abs(&(block_to_mat(ks.gbar_bb(t1, t2), 2, 2) - b)) < 1e-14);
        }
    }
}
