//! Manufactured solutions, discretization errors and matrix diagnostics.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::basis::{eval_basis, eval_basis_grad, facet_quadrature, l2_project, volume_quadrature, BasisError, BasisSpec, DegreeVector, DofMap, QuadRule};
use crate::geometry::Point2;
use crate::local_ops::{scalar_mass, DiffusionTensor, ProblemData};
use crate::mesh::{FacetKind, Mesh};
use crate::method::FacetParams;
use crate::par::map_indices;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("unknown manufactured solution '{0}' (expected sincos, tanh-front or linear)")]
    UnknownSolution(String),
    #[error("coefficient vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

type Field = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;
type VecField = Arc<dyn Fn(Point2) -> [f64; 2] + Send + Sync>;
/// `[u_xx, u_xy, u_yy]`.
type HessField = Arc<dyn Fn(Point2) -> [f64; 3] + Send + Sync>;

/// Exact solution with its derivatives and the matching source term.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub name: &'static str,
    pub u: Field,
    pub grad_u: VecField,
    hess_u: HessField,
    pub kappa: DiffusionTensor,
}

impl std::fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedSolution").field("name", &self.name).finish_non_exhaustive()
    }
}

pub const SOLUTION_NAMES: [&str; 3] = ["sincos", "tanh-front", "linear"];

impl ManufacturedSolution {
    /// `sin(2πx) cos(2πy)`.
    pub fn sincos(kappa: DiffusionTensor) -> Self {
        let w = 2.0 * PI;
        Self {
            name: "sincos",
            u: Arc::new(move |p| (w * p.x).sin() * (w * p.y).cos()),
            grad_u: Arc::new(move |p| {
                [w * (w * p.x).cos() * (w * p.y).cos(), -w * (w * p.x).sin() * (w * p.y).sin()]
            }),
            hess_u: Arc::new(move |p| {
                let (sx, cx, sy, cy) = ((w * p.x).sin(), (w * p.x).cos(), (w * p.y).sin(), (w * p.y).cos());
                [-w * w * sx * cy, -w * w * cx * sy, -w * w * sx * cy]
            }),
            kappa,
        }
    }

    /// `tanh(-20 (x² + y² - 0.8))`, a steep circular front.
    pub fn tanh_front(kappa: DiffusionTensor) -> Self {
        let t = |p: Point2| (-20.0 * (p.x * p.x + p.y * p.y - 0.8)).tanh();
        Self {
            name: "tanh-front",
            u: Arc::new(t),
            grad_u: Arc::new(move |p| {
                let s = 1.0 - t(p).powi(2);
                [-40.0 * p.x * s, -40.0 * p.y * s]
            }),
            hess_u: Arc::new(move |p| {
                let th = t(p);
                let s = 1.0 - th * th;
                // d/dz sech² = -2 tanh sech²
                let (gx, gy) = (-40.0 * p.x, -40.0 * p.y);
                [-2.0 * th * s * gx * gx - 40.0 * s, -2.0 * th * s * gx * gy, -2.0 * th * s * gy * gy - 40.0 * s]
            }),
            kappa,
        }
    }

    /// `0.3 + 1.2x - 0.7y`, reproduced exactly by every method.
    pub fn linear(kappa: DiffusionTensor) -> Self {
        Self {
            name: "linear",
            u: Arc::new(|p| 0.3 + 1.2 * p.x - 0.7 * p.y),
            grad_u: Arc::new(|_| [1.2, -0.7]),
            hess_u: Arc::new(|_| [0.0; 3]),
            kappa,
        }
    }

    /// Looks up `sincos`/`ms1`, `tanh-front`/`ms2` or `linear`/`ms3`.
    pub fn by_name(name: &str, kappa: DiffusionTensor) -> Result<Self, AnalysisError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "sincos" | "ms1" => Ok(Self::sincos(kappa)),
            "tanh-front" | "tanh" | "ms2" => Ok(Self::tanh_front(kappa)),
            "linear" | "ms3" => Ok(Self::linear(kappa)),
            _ => Err(AnalysisError::UnknownSolution(name.to_string())),
        }
    }

    /// `-∇·(κ∇u)` for constant `κ`.
    pub fn f(&self, p: Point2) -> f64 {
        let [[k11, k12], [k21, k22]] = self.kappa.entries();
        let [uxx, uxy, uyy] = (self.hess_u)(p);
        -(k11 * uxx + (k12 + k21) * uxy + k22 * uyy)
    }

    /// Source, Dirichlet data `u` and Neumann data `κ∇u·n`.
    pub fn problem_data(&self) -> ProblemData {
        let (s1, s2, s3) = (self.clone(), self.clone(), self.clone());
        ProblemData {
            kappa: self.kappa.clone(),
            f: Arc::new(move |p| s1.f(p)),
            g_d: Arc::new(move |p| (s2.u)(p)),
            g_n: Arc::new(move |p, n| {
                let g = (s3.grad_u)(p);
                s3.kappa.apply(Point2::new(g[0], g[1])).dot(n)
            }),
        }
    }
}

fn check_len(dofs: &DofMap, coeffs: &DVector<f64>) -> Result<(), AnalysisError> {
    if coeffs.len() != dofs.n_dofs() {
        return Err(AnalysisError::LengthMismatch { expected: dofs.n_dofs(), found: coeffs.len() });
    }
    Ok(())
}

/// L2 projection of `u` element by element.
pub fn interpolate(mesh: &Mesh, degrees: &DegreeVector, u: &(dyn Fn(Point2) -> f64 + Sync)) -> Result<DVector<f64>, AnalysisError> {
    let parts = map_indices(mesh.n_elements(), |k| {
        l2_project(&mesh.element_points(k), &BasisSpec::for_element(mesh, degrees, k), u)
    });
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?.iter().copied());
    }
    Ok(DVector::from_vec(out))
}

fn error_rule(mesh: &Mesh, spec: &BasisSpec) -> Result<QuadRule, BasisError> {
    volume_quadrature(&mesh.element_points(spec.element), 2 * spec.degree + 4)
}

/// `‖u_h - u‖_{L2(Ω)}`.
pub fn error_l2(mesh: &Mesh, degrees: &DegreeVector, coeffs: &DVector<f64>, ms: &ManufacturedSolution) -> Result<f64, AnalysisError> {
    let dofs = DofMap::new(degrees);
    check_len(&dofs, coeffs)?;
    let parts = map_indices(mesh.n_elements(), |k| -> Result<f64, BasisError> {
        let spec = BasisSpec::for_element(mesh, degrees, k);
        let rule = error_rule(mesh, &spec)?;
        let uh = eval_basis(&spec, &rule.points).tr_mul(&coeffs.rows(dofs.offset(k), spec.dim));
        Ok(rule
            .points
            .iter()
            .zip(&rule.weights)
            .enumerate()
            .map(|(q, (&p, &w))| w * ((ms.u)(p) - uh[q]).powi(2))
            .sum())
    });
    let mut s = 0.0;
    for p in parts {
        s += p?;
    }
    Ok(s.sqrt())
}

/// `∫_T κ L · L` for a lifting with coefficients `c = [c_x; c_y]` on an
/// element with scalar mass `ms`.
fn lifting_energy(kappa: &DiffusionTensor, ms: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let n = ms.nrows();
    let (cx, cy) = (c.rows(0, n), c.rows(n, n));
    let [[k11, k12], [k21, k22]] = kappa.entries();
    let mx = ms * cx;
    let my = ms * cy;
    k11 * cx.dot(&mx) + k12 * cx.dot(&my) + k21 * cy.dot(&mx) + k22 * cy.dot(&my)
}

/// CDG energy norm of the error, `|||u - u_h|||`: broken gradient term plus
/// `χ_F ‖√κ L(⟦u - u_h⟧)‖²` per interior and Dirichlet facet. Liftings are
/// supported where the facet weights of `params` are nonzero, so a
/// two-sided method lifts onto both neighbors with weight ½.
pub fn error_cdg_norm(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    coeffs: &DVector<f64>,
    ms: &ManufacturedSolution,
) -> Result<f64, AnalysisError> {
    let dofs = DofMap::new(degrees);
    check_len(&dofs, coeffs)?;
    let kappa = &ms.kappa;
    let local = |k: usize| coeffs.rows(dofs.offset(k), dofs.dim(k)).into_owned();

    let grad_parts = map_indices(mesh.n_elements(), |k| -> Result<(f64, DMatrix<f64>), BasisError> {
        let spec = BasisSpec::for_element(mesh, degrees, k);
        let rule = error_rule(mesh, &spec)?;
        let (gx, gy) = eval_basis_grad(&spec, &rule.points);
        let c = local(k);
        let (ux, uy) = (gx.tr_mul(&c), gy.tr_mul(&c));
        let mut s = 0.0;
        for (q, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let g = (ms.grad_u)(p);
            let e = Point2::new(g[0] - ux[q], g[1] - uy[q]);
            s += w * kappa.apply(e).dot(e);
        }
        Ok((s, scalar_mass(&spec, &rule)))
    });
    let mut total = 0.0;
    let mut masses = Vec::with_capacity(mesh.n_elements());
    for part in grad_parts {
        let (s, m) = part?;
        total += s;
        masses.push(m);
    }
    let chols: Vec<_> = masses
        .iter()
        .enumerate()
        .map(|(k, m)| m.clone().cholesky().ok_or(BasisError::SingularMass(k)))
        .collect::<Result<_, _>>()?;

    let pmax = degrees.max();
    let facet_parts = map_indices(mesh.facets.len(), |f| {
        let facet = &mesh.facets[f];
        if facet.kind == FacetKind::Neumann {
            return 0.0;
        }
        let rule = facet_quadrature(facet.endpoints[0], facet.endpoints[1], 2 * pmax + 4);
        let trace = |k: usize| eval_basis(&BasisSpec::for_element(mesh, degrees, k), &rule.points).tr_mul(&local(k));
        let (k1, k2) = facet.adjacent;
        // scalar jump of the error along n_F
        let jump: DVector<f64> = match k2 {
            Some(k2) => trace(k2) - trace(k1),
            None => {
                let g = DVector::from_iterator(rule.len(), rule.points.iter().map(|&p| (ms.u)(p)));
                g - trace(k1)
            }
        };
        let sup: Vec<(usize, f64)> = match k2 {
            Some(k2) => {
                let a = params.alpha[f];
                [(k1, a), (k2, 1.0 - a)].into_iter().filter(|&(_, w)| w != 0.0).collect()
            }
            None => vec![(k1, 1.0)],
        };
        let n = facet.normal;
        let mut s = 0.0;
        for (t, w) in sup {
            let spec = BasisSpec::for_element(mesh, degrees, t);
            let phi = eval_basis(&spec, &rule.points);
            let jw = DVector::from_iterator(rule.len(), (0..rule.len()).map(|q| w * rule.weights[q] * jump[q]));
            let r = phi * jw;
            let d = spec.dim;
            let mut c = DVector::zeros(2 * d);
            c.rows_mut(0, d).copy_from(&chols[t].solve(&(&r * n.x)));
            c.rows_mut(d, d).copy_from(&chols[t].solve(&(&r * n.y)));
            s += lifting_energy(kappa, &masses[t], &c);
        }
        params.chi[f] * s
    });
    total += facet_parts.iter().sum::<f64>();
    Ok(total.max(0.0).sqrt())
}

/// Sparsity summary of a block-structured matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StencilStats {
    pub nnz: usize,
    pub block_count: usize,
    /// `histogram[m]` = number of block rows with `m` stored blocks.
    pub blocks_per_element: Vec<usize>,
}

pub fn stencil_stats(a: &CsrMatrix, dofs: &DofMap) -> StencilStats {
    let ne = dofs.n_elements();
    let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ne];
    for i in 0..a.n {
        let r = dofs.element_of(i);
        for &j in a.row(i).0 {
            rows[r].insert(dofs.element_of(j));
        }
    }
    let max = rows.iter().map(BTreeSet::len).max().unwrap_or(0);
    let mut hist = vec![0; max + 1];
    for r in &rows {
        hist[r.len()] += 1;
    }
    StencilStats { nnz: a.nnz(), block_count: rows.iter().map(BTreeSet::len).sum(), blocks_per_element: hist }
}

/// Expected compact-stencil nnz for uniform dimension `Λ`:
/// `Λ² (N_el + 2 N_F^I)`.
pub fn compact_nnz(mesh: &Mesh, p: usize) -> usize {
    let l = crate::basis::basis_dim(p);
    l * l * (mesh.n_elements() + 2 * mesh.n_interior_facets())
}

/// Symmetry, extremal spectrum and sparsity in one record.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixDiagnostics {
    pub nnz: usize,
    pub block_count: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Only for positive definite matrices.
    pub cond2: Option<f64>,
    pub symmetry_defect: f64,
}

pub fn matrix_diagnostics(a: &CsrMatrix, dofs: &DofMap) -> Result<MatrixDiagnostics, crate::eigen::EigenError> {
    let st = stencil_stats(a, dofs);
    let lambda_min = crate::eigen::min_eigenvalue(a)?;
    let lambda_max = crate::eigen::max_eigenvalue(a, 1e-6, 100_000);
    Ok(MatrixDiagnostics {
        nnz: st.nnz,
        block_count: st.block_count,
        lambda_min,
        lambda_max,
        cond2: (lambda_min > 0.0).then(|| lambda_max / lambda_min),
        symmetry_defect: a.symmetry_defect(),
    })
}

/// Element-wise values of `u_h` at the centroids (for plotting).
pub fn centroid_values(mesh: &Mesh, degrees: &DegreeVector, coeffs: &DVector<f64>) -> Vec<f64> {
    let dofs = DofMap::new(degrees);
    (0..mesh.n_elements())
        .map(|k| {
            let spec = BasisSpec::for_element(mesh, degrees, k);
            crate::basis::eval_expansion(&spec, coeffs.rows(dofs.offset(k), spec.dim).as_slice(), mesh.elements[k].centroid)
        })
        .collect()
}
