//! Extremal eigenvalues of symmetric sparse matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::CsrMatrix;

/// Matrices up to this size use a dense symmetric eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 500;
pub const LANCZOS_MAXIT: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("Lanczos did not converge in {iterations} steps (best estimate {estimate:e})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("matrix is not positive definite (λ_min = {0:e})")]
    Indefinite(f64),
    #[error("empty matrix")]
    Empty,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub dense_limit: usize,
    pub rel_tol: f64,
    pub maxit: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { dense_limit: DENSE_EIGEN_LIMIT, rel_tol: 1e-8, maxit: LANCZOS_MAXIT, seed: 0x5eed }
    }
}

fn random_unit(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let nv = v.norm();
    v / nv
}

fn matvec(a: &CsrMatrix, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(a.matvec(x.as_slice()))
}

pub fn min_eigenvalue(a: &CsrMatrix) -> Result<f64, EigenError> {
    min_eigenvalue_with(a, &EigenOptions::default())
}

pub fn min_eigenvalue_with(a: &CsrMatrix, opts: &EigenOptions) -> Result<f64, EigenError> {
    if a.n == 0 {
        return Err(EigenError::Empty);
    }
    if a.n <= opts.dense_limit {
        let ev = SymmetricEigen::new(a.to_dense()).eigenvalues;
        return Ok(ev.min());
    }
    if let Some(ch) = SparseCholesky::new(a) {
        // positive definite: the dominant eigenvalue of A⁻¹ converges in a
        // handful of steps
        let mu = lanczos_largest(a.n, |x| ch.solve(x), opts)?;
        return Ok(1.0 / mu);
    }
    // Indefinite: bracket λ_min by bisection on the success of the Cholesky
    // factorization of A - σI, then shift-invert just below it.
    let rho = max_abs_eigenvalue(a, 1e-6, 100_000);
    let mut lo = -1.05 * rho;
    let mut lo_factor = loop {
        match SparseCholesky::new(&shifted(a, lo)) {
            Some(c) => break c,
            None => lo *= 2.0,
        }
    };
    let mut hi = 0.0;
    let mut steps = 0;
    while hi - lo > 1e-4 * lo.abs() && steps < 64 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        match SparseCholesky::new(&shifted(a, mid)) {
            Some(c) => {
                lo = mid;
                lo_factor = c;
            }
            None => hi = mid,
        }
    }
    let mu = lanczos_largest(a.n, |x| lo_factor.solve(x), opts)?;
    Ok(lo + 1.0 / mu)
}

/// `A - σI` (the diagonal is assumed stored).
fn shifted(a: &CsrMatrix, sigma: f64) -> CsrMatrix {
    let mut s = a.clone();
    for i in 0..s.n {
        let (lo, hi) = (s.row_ptr[i], s.row_ptr[i + 1]);
        if let Ok(k) = s.col_idx[lo..hi].binary_search(&i) {
            s.values[lo + k] -= sigma;
        }
    }
    s
}

/// Sparse Cholesky factor, `None` when `A` is not positive definite.
pub struct SparseCholesky {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Option<Self> {
        use faer::sparse::{SparseColMat, SymbolicSparseColMat};
        // CSR of a symmetric matrix is its CSC
        let sym = SymbolicSparseColMat::new_checked(a.n, a.n, a.row_ptr.clone(), None, a.col_idx.clone());
        let m = SparseColMat::new(sym, a.values.clone());
        let llt = m.sp_cholesky(faer::Side::Lower).ok()?;
        Some(Self { llt, n: a.n })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        use faer::linalg::solvers::Solve;
        let mut x = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(x.as_mut());
        DVector::from_fn(self.n, |i, _| x[(i, 0)])
    }
}

/// Lanczos with full reorthogonalization for the largest eigenvalue of the
/// symmetric operator `op` (an inverse, possibly shifted, so the answer maps
/// back to the bottom of the spectrum).
fn lanczos_largest(n: usize, op: impl Fn(&DVector<f64>) -> DVector<f64>, opts: &EigenOptions) -> Result<f64, EigenError> {
    let m_max = opts.maxit.min(n);
    let mut basis: Vec<DVector<f64>> = vec![random_unit(n, opts.seed)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev = f64::NAN;
    let mut estimate = f64::NAN;
    for j in 0..m_max {
        let mut w = op(&basis[j]);
        let aj = w.dot(&basis[j]);
        alpha.push(aj);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = w.dot(q);
                w.axpy(-c, q, 1.0);
            }
        }
        let bj = w.norm();
        let m = alpha.len();
        let check = m % 10 == 0 || bj < 1e-14 || m == m_max;
        if check {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r == c + 1 {
                    beta[c]
                } else if c == r + 1 {
                    beta[r]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (imin, &theta) =
                eig.eigenvalues.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).expect("nonempty");
            let theta_max = eig.eigenvalues.amax();
            let resid = bj * eig.eigenvectors[(m - 1, imin)].abs();
            estimate = theta;
            let scale = theta.abs().max(1e-300);
            if bj < 1e-14 * theta_max.abs().max(1.0)
                || resid <= opts.rel_tol * scale
                || resid <= 1e-10 * theta_max.abs()
                || (theta - prev).abs() <= 1e-2 * opts.rel_tol * scale
            {
                return Ok(theta);
            }
            prev = theta;
        }
        if bj < 1e-300 {
            break;
        }
        beta.push(bj);
        basis.push(w / bj);
    }
    Err(EigenError::NoConvergence { iterations: alpha.len(), estimate })
}

/// Spectral radius by power iteration.
fn max_abs_eigenvalue(a: &CsrMatrix, rel_tol: f64, maxit: usize) -> f64 {
    let mut v = random_unit(a.n, 23);
    let mut prev = 0.0;
    for _ in 0..maxit {
        let w = matvec(a, &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (nw - prev).abs() <= rel_tol * nw {
            return nw;
        }
        prev = nw;
    }
    prev
}

/// Largest eigenvalue by power iteration (assumes it dominates in magnitude,
/// true for positive semidefinite matrices).
pub fn max_eigenvalue(a: &CsrMatrix, rel_tol: f64, maxit: usize) -> f64 {
    let mut v = random_unit(a.n, 17);
    let mut lambda = 0.0;
    for _ in 0..maxit {
        let w = matvec(a, &v);
        let next = v.dot(&w);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `λ_max / λ_min` for a positive definite matrix.
pub fn condition_estimate(a: &CsrMatrix) -> Result<f64, EigenError> {
    let lmin = min_eigenvalue(a)?;
    condition_from_min(a, lmin)
}

/// Same as [`condition_estimate`] when `λ_min` is already known.
pub fn condition_from_min(a: &CsrMatrix, lmin: f64) -> Result<f64, EigenError> {
    if lmin <= 0.0 {
        return Err(EigenError::Indefinite(lmin));
    }
    Ok(max_eigenvalue(a, 1e-6, 100_000) / lmin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> CsrMatrix {
        CsrMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_column_slice(v)))
    }

    #[test]
    fn trivial_spectra() {
        assert!((min_eigenvalue(&CsrMatrix::identity(4)).unwrap() - 1.0).abs() < 1e-14);
        assert!((min_eigenvalue(&diag(&[2.0, -3.0])).unwrap() + 3.0).abs() < 1e-14);
        assert!((condition_estimate(&CsrMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-12);
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((condition_estimate(&diag(&d)).unwrap() - 10.0).abs() < 1e-4);
        assert!(matches!(condition_estimate(&diag(&[1.0, -1.0])), Err(EigenError::Indefinite(_))));
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let n = 300;
        let d = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 + 0.01 * (i as f64),
            1 => -1.0,
            _ => 0.0,
        });
        let a = CsrMatrix::from_dense(&d);
        let exact = min_eigenvalue(&a).unwrap();
        let opts = EigenOptions { dense_limit: 0, ..Default::default() };
        let l = min_eigenvalue_with(&a, &opts).unwrap();
        assert!((l - exact).abs() <= 1e-8 * exact.abs(), "{l} vs {exact}");
        let shifted = CsrMatrix::from_dense(&(d - DMatrix::identity(n, n) * 1.0));
        let ls = min_eigenvalue_with(&shifted, &opts).unwrap();
        assert!((ls - (exact - 1.0)).abs() < 1e-8);
        assert!(exact - 1.0 < 0.0);
    }

    #[test]
    fn cholesky_path_for_spd() {
        let n = 400;
        let d = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        });
        let a = CsrMatrix::from_dense(&d);
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let opts = EigenOptions { dense_limit: 0, ..Default::default() };
        let l = min_eigenvalue_with(&a, &opts).unwrap();
        assert!((l - exact).abs() <= 1e-8 * exact, "{l} vs {exact}");
        assert!(SparseCholesky::new(&CsrMatrix::from_dense(&(&d * -1.0))).is_none());
        // indefinite: bisection bracket plus shift-invert
        let shifted = CsrMatrix::from_dense(&(&d - DMatrix::identity(n, n) * 0.5));
        let l = min_eigenvalue_with(&shifted, &opts).unwrap();
        assert!((l - (exact - 0.5)).abs() <= 1e-8, "{l}");
    }
}
