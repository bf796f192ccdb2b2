//! Dense complex linear-algebra helpers.
//!
//! Public surfaces use `nalgebra::DMatrix<Complex64>`. The two-time solvers
//! work on flat column-major blocks instead so the O(T^3) loops never
//! allocate; the `gemm_acc` family below is what they use.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    hermitian_eigen(m).0
}

/// `f(m)` for Hermitian `m`, evaluated on the spectrum.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (k, &lam) in values.iter().enumerate() {
        let w = f(lam);
        scaled.column_mut(k).scale_mut(w);
    }
    &scaled * vectors.adjoint()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Nearest unitary matrix (polar factor).
pub fn unitary_projection(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Trace distance `(1/2) ||a - b||_1` for Hermitian arguments.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b))
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Column-major flat block into an `rows x cols` matrix.
pub fn block_to_mat(block: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, block)
}

pub fn mat_to_block(m: &CMat) -> Vec<C64> {
    m.as_slice().to_vec()
}

/// `c += alpha * a * b` with `a: n x k`, `b: k x m`, all column-major.
#[inline]
pub fn gemm_acc(c: &mut [C64], a: &[C64], b: &[C64], n: usize, k: usize, m: usize, alpha: C64) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(c.len(), n * m);
    if n == 1 && k == 1 && m == 1 {
        c[0] += alpha * a[0] * b[0];
        return;
    }
    for col in 0..m {
        for p in 0..k {
            let s = alpha * b[p + col * k];
            if s == ZERO {
                continue;
            }
            let a_col = &a[p * n..(p + 1) * n];
            let c_col = &mut c[col * n..(col + 1) * n];
            for (ci, ai) in c_col.iter_mut().zip(a_col) {
                *ci += ai * s;
            }
        }
    }
}

/// `c += alpha * a * b^H` with `a: n x k`, `b: m x k`.
#[inline]
pub fn gemm_acc_adj(c: &mut [C64], a: &[C64], b: &[C64], n: usize, k: usize, m: usize, alpha: C64) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    for col in 0..m {
        for p in 0..k {
            let s = alpha * b[col + p * m].conj();
            if s == ZERO {
                continue;
            }
            let a_col = &a[p * n..(p + 1) * n];
            let c_col = &mut c[col * n..(col + 1) * n];
            for (ci, ai) in c_col.iter_mut().zip(a_col) {
                *ci += ai * s;
            }
        }
    }
}

/// `c += alpha * a * b^T` with `a: n x k`, `b: m x k`.
#[inline]
pub fn gemm_acc_tr(c: &mut [C64], a: &[C64], b: &[C64], n: usize, k: usize, m: usize, alpha: C64) {
    for col in 0..m {
        for p in 0..k {
            let s = alpha * b[col + p * m];
            if s == ZERO {
                continue;
            }
            let a_col = &a[p * n..(p + 1) * n];
            let c_col = &mut c[col * n..(col + 1) * n];
            for (ci, ai) in c_col.iter_mut().zip(a_col) {
                *ci += ai * s;
            }
        }
    }
}

pub fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn identity_block(n: usize) -> Vec<C64> {
    let mut b = vec![ZERO; n * n];
    for i in 0..n {
        b[i + i * n] = ONE;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_mat(n: usize, m: usize, seed: u64) -> CMat {
        let mut state = seed;
        CMat::from_fn(n, m, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5;
            c(a, b)
        })
    }

    #[test]
    fn gemm_variants_match_nalgebra() {
        let a = random_mat(3, 4, 1);
        let b = random_mat(4, 2, 2);
        let bt = random_mat(2, 4, 3);
        let alpha = c(0.3, -1.1);

        let mut out = vec![ZERO; 6];
        gemm_acc(&mut out, a.as_slice(), b.as_slice(), 3, 4, 2, alpha);
        let expected = (&a * &b) * alpha;
        assert!(max_abs(&(block_to_mat(&out, 3, 2) - expected)) < 1e-14);

        let mut out = vec![ZERO; 6];
        gemm_acc_adj(&mut out, a.as_slice(), bt.as_slice(), 3, 4, 2, alpha);
        let expected = (&a * bt.adjoint()) * alpha;
        assert!(max_abs(&(block_to_mat(&out, 3, 2) - expected)) < 1e-14);

        let mut out = vec![ZERO; 6];
        gemm_acc_tr(&mut out, a.as_slice(), bt.as_slice(), 3, 4, 2, alpha);
        let expected = (&a * bt.transpose()) * alpha;
        assert!(max_abs(&(block_to_mat(&out, 3, 2) - expected)) < 1e-14);
    }

    #[test]
    fn hermitian_function_reproduces_square() {
        let a = random_mat(4, 4, 7);
        let h = &a + a.adjoint();
        let sq = hermitian_function(&h, |x| x * x);
        assert!(max_abs(&(sq - &h * &h)) < 1e-12);
    }

    #[test]
    fn polar_projection_is_unitary() {
        let a = random_mat(5, 5, 11);
        let u = unitary_projection(&a);
        assert!(max_abs(&(u.adjoint() * &u - identity(5))) < 1e-12);
    }
}
