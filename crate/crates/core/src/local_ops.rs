//! Dense element and facet blocks.
//!
//! Vector-valued bases are ordered component-major: the first `Λ` entries are
//! the x-components, the next `Λ` the y-components.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::basis::{eval_basis, eval_basis_grad, facet_quadrature, volume_quadrature, BasisError, BasisSpec, DegreeVector, QuadRule};
use crate::geometry::Point2;
use crate::mesh::Mesh;

pub type DenseBlock = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum LocalOpsError {
    #[error("diffusion tensor must be symmetric positive definite")]
    BadTensor,
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Constant symmetric positive definite 2x2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionTensor {
    k: [[f64; 2]; 2],
}

impl DiffusionTensor {
    pub fn identity() -> Self {
        Self { k: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn new(k: [[f64; 2]; 2]) -> Result<Self, LocalOpsError> {
        let t = Self { k };
        let sym = (k[0][1] - k[1][0]).abs() <= 1e-14 * (k[0][0].abs() + k[1][1].abs());
        if !sym || !k.iter().flatten().all(|v| v.is_finite()) || t.eigenvalues().0 <= 0.0 {
            return Err(LocalOpsError::BadTensor);
        }
        Ok(t)
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.k
    }

    /// `(lambda_min, lambda_max)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [_, d]] = self.k;
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (m - r, m + r)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.eigenvalues().1
    }

    pub fn apply(&self, v: Point2) -> Point2 {
        Point2::new(self.k[0][0] * v.x + self.k[0][1] * v.y, self.k[1][0] * v.x + self.k[1][1] * v.y)
    }

    /// `kappa (x) block`: the 2x2 block matrix with entries `k_ab * block`.
    pub fn kron(&self, block: &DenseBlock) -> DenseBlock {
        let n = block.nrows();
        let m = block.ncols();
        let mut out = DMatrix::zeros(2 * n, 2 * m);
        for a in 0..2 {
            for b in 0..2 {
                if self.k[a][b] != 0.0 {
                    out.view_mut((a * n, b * m), (n, m)).copy_from(&(block * self.k[a][b]));
                }
            }
        }
        out
    }
}

pub type ScalarFn = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;
/// Function of a boundary point and the outward unit normal there.
pub type BoundaryFn = Arc<dyn Fn(Point2, Point2) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ProblemData {
    pub kappa: DiffusionTensor,
    pub f: ScalarFn,
    pub g_d: ScalarFn,
    pub g_n: BoundaryFn,
}

impl ProblemData {
    pub fn zero() -> Self {
        Self {
            kappa: DiffusionTensor::identity(),
            f: Arc::new(|_| 0.0),
            g_d: Arc::new(|_| 0.0),
            g_n: Arc::new(|_, _| 0.0),
        }
    }
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("kappa", &self.kappa).finish_non_exhaustive()
    }
}

/// Volume rule exactness for degree `p`.
pub fn volume_order(p: usize) -> usize {
    2 * p + 2
}

/// Facet rule exactness for adjacent degrees with maximum `p`.
pub fn facet_order(p: usize) -> usize {
    2 * p + 3
}

/// Quadrature rules for every element and facet, built once per mesh/degree
/// combination and reused across assemblies.
#[derive(Debug, Clone)]
pub struct QuadratureCache {
    pub volume: Vec<QuadRule>,
    pub facet: Vec<QuadRule>,
}

impl QuadratureCache {
    pub fn new(mesh: &Mesh, degrees: &DegreeVector) -> Result<Self, BasisError> {
        let volume = crate::par::map_indices(mesh.n_elements(), |k| {
            volume_quadrature(&mesh.element_points(k), volume_order(degrees.get(k)))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let facet = mesh
            .facets
            .iter()
            .map(|f| {
                let (a, b) = f.adjacent;
                let p = b.map_or(degrees.get(a), |b| degrees.get(a).max(degrees.get(b)));
                facet_quadrature(f.endpoints[0], f.endpoints[1], facet_order(p))
            })
            .collect();
        Ok(Self { volume, facet })
    }
}

fn weighted(values: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut w = values.clone();
    for (c, &wc) in weights.iter().enumerate() {
        w.column_mut(c).scale_mut(wc);
    }
    w
}

/// Scalar mass matrix `Ms_ij = ∫_K φ_i φ_j`.
pub fn scalar_mass(spec: &BasisSpec, rule: &QuadRule) -> DenseBlock {
    let phi = eval_basis(spec, &rule.points);
    weighted(&phi, &rule.weights) * phi.transpose()
}

fn block_diag2(ms: &DenseBlock) -> DenseBlock {
    let n = ms.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(ms);
    m.view_mut((n, n), (n, n)).copy_from(ms);
    m
}

/// Vector mass matrix `[Ms 0; 0 Ms]`.
pub fn mass_block(spec: &BasisSpec, rule: &QuadRule) -> DenseBlock {
    block_diag2(&scalar_mass(spec, rule))
}

/// `∫_K ψ_i · κ ψ_j`.
pub fn diffusion_block(spec: &BasisSpec, rule: &QuadRule, kappa: &DiffusionTensor) -> DenseBlock {
    kappa.kron(&scalar_mass(spec, rule))
}

/// `-∫_K ψ_i · ∇φ_j`, shape `2Λ x Λ`.
pub fn grad_block(spec: &BasisSpec, rule: &QuadRule) -> DenseBlock {
    let phi = eval_basis(spec, &rule.points);
    let (gx, gy) = eval_basis_grad(spec, &rule.points);
    let pw = weighted(&phi, &rule.weights);
    let n = spec.dim;
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((0, 0), (n, n)).copy_from(&(-(&pw * gx.transpose())));
    b.view_mut((n, 0), (n, n)).copy_from(&(-(&pw * gy.transpose())));
    b
}

/// `∫_F φ^a_i φ^b_j` over a facet rule; traces of neighbor bases are their
/// polynomial extensions.
pub fn facet_mass(rule: &QuadRule, a: &BasisSpec, b: &BasisSpec) -> DenseBlock {
    let pa = eval_basis(a, &rule.points);
    let pb = if a == b { pa.clone() } else { eval_basis(b, &rule.points) };
    weighted(&pa, &rule.weights) * pb.transpose()
}

/// Stacks `[n_x P; n_y P]`.
fn normal_stack(p: &DenseBlock, n: Point2, scale: f64) -> DenseBlock {
    let (r, c) = p.shape();
    let mut out = DMatrix::zeros(2 * r, c);
    out.view_mut((0, 0), (r, c)).copy_from(&(p * (scale * n.x)));
    out.view_mut((r, 0), (r, c)).copy_from(&(p * (scale * n.y)));
    out
}

/// `w ∫_F ψ^r_i · (φ^r_j n_r)` from the facet mass `∫_F φ^r φ^r`.
pub fn bav_diag_from_mass(p_rr: &DenseBlock, n_r: Point2, w: f64) -> DenseBlock {
    normal_stack(p_rr, n_r, w)
}

/// `-w ∫_F ψ^r_i · (φ^s_j n_r)` from the facet mass `∫_F φ^r φ^s`.
pub fn bav_offdiag_from_mass(p_rs: &DenseBlock, n_r: Point2, w: f64) -> DenseBlock {
    normal_stack(p_rs, n_r, -w)
}

pub fn bav_diag_block(rule: &QuadRule, spec_r: &BasisSpec, n_r: Point2, w: f64) -> DenseBlock {
    bav_diag_from_mass(&facet_mass(rule, spec_r, spec_r), n_r, w)
}

pub fn bav_offdiag_block(rule: &QuadRule, spec_r: &BasisSpec, spec_s: &BasisSpec, n_r: Point2, w: f64) -> DenseBlock {
    bav_offdiag_from_mass(&facet_mass(rule, spec_r, spec_s), n_r, w)
}

/// Penalty blocks of one interior facet: `(S_aa, S_ab, S_bb)` with
/// `S_ab = -η ∫_F φ^a φ^b`.
pub fn stability_blocks(rule: &QuadRule, a: &BasisSpec, b: &BasisSpec, eta: f64) -> (DenseBlock, DenseBlock, DenseBlock) {
    (
        facet_mass(rule, a, a) * eta,
        facet_mass(rule, a, b) * (-eta),
        facet_mass(rule, b, b) * eta,
    )
}

/// `∫_K f φ_i`.
pub fn load_vector(spec: &BasisSpec, rule: &QuadRule, f: &dyn Fn(Point2) -> f64) -> DVector<f64> {
    let phi = eval_basis(spec, &rule.points);
    let fw = DVector::from_iterator(rule.len(), rule.points.iter().zip(&rule.weights).map(|(&p, &w)| w * f(p)));
    phi * fw
}

/// `∫_F g_N φ_i` with `n` the outward normal.
pub fn neumann_vector(spec: &BasisSpec, rule: &QuadRule, g_n: &dyn Fn(Point2, Point2) -> f64, n: Point2) -> DVector<f64> {
    load_vector(spec, rule, &|p| g_n(p, n))
}

/// `-∫_F ψ_i · (g_D n_r)`, length `2Λ`.
pub fn dirichlet_vector(spec: &BasisSpec, rule: &QuadRule, g_d: &dyn Fn(Point2) -> f64, n_r: Point2) -> DVector<f64> {
    let s = load_vector(spec, rule, g_d);
    let n = spec.dim;
    let mut g = DVector::zeros(2 * n);
    g.rows_mut(0, n).copy_from(&(&s * (-n_r.x)));
    g.rows_mut(n, n).copy_from(&(&s * (-n_r.y)));
    g
}

/// `η ∫_F g_D φ_i`.
pub fn ldg_dirichlet_vector(spec: &BasisSpec, rule: &QuadRule, g_d: &dyn Fn(Point2) -> f64, eta: f64) -> DVector<f64> {
    load_vector(spec, rule, g_d) * eta
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DenseBlock, element: usize) -> Result<DenseBlock, BasisError> {
    m.clone().cholesky().map(|c| c.inverse()).ok_or(BasisError::SingularMass(element))
}

/// Per-element volume data used by the assemblers.
///
/// `𝒟 = M⁻¹ D M⁻¹ = κ ⊗ Ms⁻¹` is never formed; products with it go through
/// the scalar inverse mass matrix one component block at a time.
#[derive(Debug, Clone)]
pub struct ElementOps {
    pub spec: BasisSpec,
    pub kappa: DiffusionTensor,
    pub ms_inv: DenseBlock,
    /// `-∫_K φ_i ∂_x φ_j` and `-∫_K φ_i ∂_y φ_j`.
    pub gx: DenseBlock,
    pub gy: DenseBlock,
    pub load: DVector<f64>,
}

impl ElementOps {
    pub fn compute(spec: BasisSpec, rule: &QuadRule, data: &ProblemData) -> Result<Self, BasisError> {
        let phi = eval_basis(&spec, &rule.points);
        let (dx, dy) = eval_basis_grad(&spec, &rule.points);
        let pw = weighted(&phi, &rule.weights);
        let ms = &pw * phi.transpose();
        let ms_inv = spd_inverse(&ms, spec.element)?;
        let gx = -(&pw * dx.transpose());
        let gy = -(&pw * dy.transpose());
        let fw = DVector::from_iterator(rule.len(), rule.points.iter().map(|&p| (data.f)(p)));
        let load = &pw * fw;
        Ok(Self { kappa: data.kappa, ms_inv, gx, gy, load, spec })
    }

    /// The stacked gradient block `B∇ = [gx; gy]`.
    pub fn grad(&self) -> DenseBlock {
        let n = self.spec.dim;
        let mut g = DMatrix::zeros(2 * n, n);
        g.view_mut((0, 0), (n, n)).copy_from(&self.gx);
        g.view_mut((n, 0), (n, n)).copy_from(&self.gy);
        g
    }

    /// `𝒟 b` for a stacked `2Λ x m` block.
    pub fn apply_d(&self, b: &DenseBlock) -> DenseBlock {
        let n = self.spec.dim;
        let m = b.ncols();
        let ux = &self.ms_inv * b.rows(0, n);
        let uy = &self.ms_inv * b.rows(n, n);
        let [[k00, k01], [k10, k11]] = self.kappa.entries();
        let mut out = DMatrix::zeros(2 * n, m);
        out.view_mut((0, 0), (n, m)).copy_from(&(&ux * k00 + &uy * k01));
        out.view_mut((n, 0), (n, m)).copy_from(&(&ux * k10 + &uy * k11));
        out
    }

    /// `B∇ᵀ 𝒟 B∇ = Σ_ab κ_ab G_aᵀ Ms⁻¹ G_b`.
    pub fn stiffness(&self) -> DenseBlock {
        let [[k00, k01], [k10, k11]] = self.kappa.entries();
        let ux = &self.ms_inv * &self.gx;
        let uy = &self.ms_inv * &self.gy;
        let mut a = self.gx.transpose() * (&ux * k00 + &uy * k01);
        a += self.gy.transpose() * (&ux * k10 + &uy * k11);
        a
    }

    /// `Σ_a (κn)_a G_a`, the gradient block contracted with `κn`.
    pub fn grad_along(&self, n: Point2) -> DenseBlock {
        let kn = self.kappa.apply(n);
        &self.gx * kn.x + &self.gy * kn.y
    }
}
