//! Linear solvers: dense factorization for small systems, block-Jacobi
//! preconditioned conjugate gradients otherwise.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::assembly::AssembledSystem;
use crate::basis::DofMap;
use crate::par::Execution;
use crate::sparse::CsrMatrix;

/// Systems up to this size are factorized densely.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix not positive definite; check χ_F / flux orientation (detected at iteration {iteration})")]
    NotPositiveDefinite { iteration: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("right-hand side has length {rhs}, matrix has {n} rows")]
    DimensionMismatch { n: usize, rhs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    DenseCholesky,
    /// Dense LU, used when the matrix is not positive definite.
    DenseLu,
    Pcg,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub maxit: usize,
    pub dense_limit: usize,
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-12, maxit: 20_000, dense_limit: DENSE_LIMIT, exec: Execution::Auto }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub coeffs: DVector<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
    /// `‖Au - b‖ / ‖b‖`, recomputed after the solve.
    pub residual: f64,
    pub converged: bool,
    /// `false` when the dense Cholesky factorization failed.
    pub positive_definite: bool,
    pub t_solve: f64,
}

/// `‖Ax - b‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual(a: &CsrMatrix, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ax = a.matvec(x.as_slice());
    let r: f64 = ax.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let nb = b.norm();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

pub fn solve(system: &AssembledSystem, opts: &SolveOptions) -> Result<DiscreteSolution, SolveError> {
    solve_matrix(&system.matrix, &system.rhs, Some(&system.dofs), opts)
}

/// Solves `A x = b`. `dofs` defines the Jacobi blocks; without it the
/// preconditioner is the diagonal.
pub fn solve_matrix(
    a: &CsrMatrix,
    b: &DVector<f64>,
    dofs: Option<&DofMap>,
    opts: &SolveOptions,
) -> Result<DiscreteSolution, SolveError> {
    if b.len() != a.n {
        return Err(SolveError::DimensionMismatch { n: a.n, rhs: b.len() });
    }
    let start = Instant::now();
    let mut sol = if a.n <= opts.dense_limit {
        solve_dense(a, b)?
    } else {
        pcg(a, b, dofs, opts)?
    };
    sol.t_solve = start.elapsed().as_secs_f64();
    sol.residual = relative_residual(a, &sol.coeffs, b);
    if sol.method != SolveMethod::Pcg {
        sol.converged = sol.coeffs.iter().all(|v| v.is_finite()) && sol.residual <= opts.tol.max(1e-8);
    }
    Ok(sol)
}

fn solve_dense(a: &CsrMatrix, b: &DVector<f64>) -> Result<DiscreteSolution, SolveError> {
    let dense = a.to_dense();
    let (coeffs, method) = match dense.clone().cholesky() {
        Some(ch) => (ch.solve(b), SolveMethod::DenseCholesky),
        None => (dense.lu().solve(b).ok_or(SolveError::Singular)?, SolveMethod::DenseLu),
    };
    Ok(DiscreteSolution {
        coeffs,
        method,
        iterations: 1,
        residual: 0.0,
        converged: true,
        positive_definite: method == SolveMethod::DenseCholesky,
        t_solve: 0.0,
    })
}

/// Inverse diagonal blocks.
struct BlockJacobi {
    ranges: Vec<std::ops::Range<usize>>,
    inverses: Vec<DMatrix<f64>>,
}

impl BlockJacobi {
    fn new(a: &CsrMatrix, dofs: Option<&DofMap>) -> Result<Self, SolveError> {
        let ranges: Vec<_> = match dofs {
            Some(d) => (0..d.n_elements()).map(|k| d.range(k)).collect(),
            None => (0..a.n).map(|i| i..i + 1).collect(),
        };
        let inverses = ranges
            .iter()
            .map(|r| {
                let m = DMatrix::from_fn(r.len(), r.len(), |i, j| a.get(r.start + i, r.start + j));
                // a principal submatrix of an SPD matrix is SPD
                m.cholesky().map(|c| c.inverse()).ok_or(SolveError::NotPositiveDefinite { iteration: 0 })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { ranges, inverses })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for (rg, inv) in self.ranges.iter().zip(&self.inverses) {
            let n = rg.len();
            for i in 0..n {
                z[rg.start + i] = (0..n).map(|j| inv[(i, j)] * r[rg.start + j]).sum();
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &CsrMatrix, b: &DVector<f64>, dofs: Option<&DofMap>, opts: &SolveOptions) -> Result<DiscreteSolution, SolveError> {
    let n = a.n;
    let pre = BlockJacobi::new(a, dofs)?;
    let bnorm = b.norm();
    let mut x = vec![0.0; n];
    let done = |x: Vec<f64>, it: usize, converged: bool| DiscreteSolution {
        coeffs: DVector::from_vec(x),
        method: SolveMethod::Pcg,
        iterations: it,
        residual: 0.0,
        converged,
        positive_definite: true,
        t_solve: 0.0,
    };
    if bnorm == 0.0 {
        return Ok(done(x, 0, true));
    }
    let mut r: Vec<f64> = b.iter().copied().collect();
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.maxit {
        a.matvec_with(opts.exec, &p, &mut q);
        let curv = dot(&p, &q);
        if curv <= 0.0 {
            return Err(SolveError::NotPositiveDefinite { iteration: it });
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if dot(&r, &r).sqrt() <= opts.tol * bnorm {
            return Ok(done(x, it, true));
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    log::warn!("PCG stopped after {} iterations without reaching {:e}", opts.maxit, opts.tol);
    Ok(done(x, opts.maxit, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcg_opts() -> SolveOptions {
        SolveOptions { dense_limit: 0, ..Default::default() }
    }

    #[test]
    fn identity_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 4.0]);
        let s = solve_matrix(&a, &b, None, &pcg_opts()).unwrap();
        assert!(s.iterations <= 1);
        assert!((s.coeffs - b).amax() < 1e-14);
    }

    #[test]
    fn pcg_matches_dense_on_laplacian() {
        let n = 50;
        let d = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        });
        let a = CsrMatrix::from_dense(&d);
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let s1 = solve_matrix(&a, &b, None, &pcg_opts()).unwrap();
        let s2 = solve_matrix(&a, &b, None, &SolveOptions::default()).unwrap();
        assert_eq!(s2.method, SolveMethod::DenseCholesky);
        assert!((s1.coeffs - s2.coeffs).amax() < 1e-9);
        assert!(s1.residual < 1e-12);
    }

    #[test]
    fn indefinite_is_detected() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0, 1.0]));
        let a = CsrMatrix::from_dense(&d);
        let b = DVector::from_element(3, 1.0);
        assert!(matches!(solve_matrix(&a, &b, None, &pcg_opts()), Err(SolveError::NotPositiveDefinite { .. })));
        let s = solve_matrix(&a, &b, None, &SolveOptions::default()).unwrap();
        assert!(!s.positive_definite);
        assert!((s.coeffs[1] + 1.0 / 3.0).abs() < 1e-14);
        let off = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let e = solve_matrix(&CsrMatrix::from_dense(&off), &DVector::from_vec(vec![1.0, -1.0]), None, &pcg_opts());
        assert!(matches!(e, Err(SolveError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn error_message_mentions_flux() {
        let e = SolveError::NotPositiveDefinite { iteration: 3 };
        assert!(e.to_string().starts_with("matrix not positive definite; check χ_F / flux orientation"));
    }
}
