//! Element-wise modal bases and quadrature.
//!
//! The basis of element `K` with degree `p` is the set of tensor Legendre
//! products `P_i(xi) P_j(eta)`, `i + j <= p`, in coordinates mapping the
//! bounding box of `K` to `[-1, 1]^2`, scaled to be orthonormal in
//! `L2(box)`. Modes are ordered by total degree, so the degree-`q` basis is
//! a prefix of the degree-`p` basis for `q <= p`.

mod legendre;
mod quadrature;
mod triangulate;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::Point2;
use crate::mesh::Mesh;

pub use legendre::{gauss_legendre, legendre_values, legendre_values_and_derivs};
pub use quadrature::{facet_quadrature, triangle_quadrature, volume_quadrature, QuadRule};
pub use triangulate::triangulate_polygon;

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 15;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("invalid polygon: {0}")]
    BadPolygon(String),
    #[error("polynomial degree must be in 1..={MAX_DEGREE}, got {0}")]
    BadDegree(usize),
    #[error("local mass matrix of element {0} is not positive definite")]
    SingularMass(usize),
}

pub const fn basis_dim(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// `(i, j)` Legendre index pairs in basis order.
pub fn modes(p: usize) -> Vec<(usize, usize)> {
    let mut m = Vec::with_capacity(basis_dim(p));
    for d in 0..=p {
        for j in 0..=d {
            m.push((d - j, j));
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeVector(Vec<usize>);

impl DegreeVector {
    pub fn new(degrees: Vec<usize>) -> Result<Self, BasisError> {
        if let Some(&p) = degrees.iter().find(|&&p| p == 0 || p > MAX_DEGREE) {
            return Err(BasisError::BadDegree(p));
        }
        Ok(Self(degrees))
    }

    pub fn uniform(n_elements: usize, p: usize) -> Result<Self, BasisError> {
        Self::new(vec![p; n_elements])
    }

    pub fn get(&self, k: usize) -> usize {
        self.0[k]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Offsets of each element's coefficients in the global vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    offsets: Vec<usize>,
}

impl DofMap {
    pub fn new(degrees: &DegreeVector) -> Self {
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        offsets.push(0);
        for &p in degrees.as_slice() {
            offsets.push(offsets.last().unwrap() + basis_dim(p));
        }
        Self { offsets }
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn dim(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn n_dofs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_elements(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Element owning global dof `i`.
    pub fn element_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub element: usize,
    pub degree: usize,
    /// `[xmin, xmax, ymin, ymax]`
    pub bbox: [f64; 4],
    pub dim: usize,
}

impl BasisSpec {
    pub fn new(element: usize, degree: usize, bbox: [f64; 4]) -> Self {
        assert!((1..=MAX_DEGREE).contains(&degree), "degree {degree} out of range");
        Self { element, degree, bbox, dim: basis_dim(degree) }
    }

    pub fn for_element(mesh: &Mesh, degrees: &DegreeVector, k: usize) -> Self {
        Self::new(k, degrees.get(k), mesh.elements[k].bbox)
    }

    fn map(&self, p: Point2) -> (f64, f64, f64, f64) {
        let [x0, x1, y0, y1] = self.bbox;
        let (dx, dy) = (x1 - x0, y1 - y0);
        (2.0 * (p.x - x0) / dx - 1.0, 2.0 * (p.y - y0) / dy - 1.0, dx, dy)
    }

    /// Basis values at `p` into `out[..dim]`.
    pub fn eval(&self, p: Point2, out: &mut [f64]) {
        let (xi, eta, dx, dy) = self.map(p);
        let mut lx = [0.0; MAX_DEGREE + 1];
        let mut ly = [0.0; MAX_DEGREE + 1];
        legendre_values(self.degree, xi, &mut lx);
        legendre_values(self.degree, eta, &mut ly);
        let inv_sqrt_area = 1.0 / (dx * dy).sqrt();
        let mut k = 0;
        for d in 0..=self.degree {
            for j in 0..=d {
                let i = d - j;
                let c = (((2 * i + 1) * (2 * j + 1)) as f64).sqrt() * inv_sqrt_area;
                out[k] = c * lx[i] * ly[j];
                k += 1;
            }
        }
    }

    /// Basis values and gradients at `p`.
    pub fn eval_with_grad(&self, p: Point2, val: &mut [f64], gx: &mut [f64], gy: &mut [f64]) {
        let (xi, eta, dx, dy) = self.map(p);
        let mut lx = [0.0; MAX_DEGREE + 1];
        let mut ly = [0.0; MAX_DEGREE + 1];
        let mut dlx = [0.0; MAX_DEGREE + 1];
        let mut dly = [0.0; MAX_DEGREE + 1];
        legendre_values_and_derivs(self.degree, xi, &mut lx, &mut dlx);
        legendre_values_and_derivs(self.degree, eta, &mut ly, &mut dly);
        let inv_sqrt_area = 1.0 / (dx * dy).sqrt();
        let (sx, sy) = (2.0 / dx, 2.0 / dy);
        let mut k = 0;
        for d in 0..=self.degree {
            for j in 0..=d {
                let i = d - j;
                let c = (((2 * i + 1) * (2 * j + 1)) as f64).sqrt() * inv_sqrt_area;
                val[k] = c * lx[i] * ly[j];
                gx[k] = c * sx * dlx[i] * ly[j];
                gy[k] = c * sy * lx[i] * dly[j];
                k += 1;
            }
        }
    }
}

/// `dim x npts` matrix of basis values.
pub fn eval_basis(spec: &BasisSpec, pts: &[Point2]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(spec.dim, pts.len());
    let mut buf = vec![0.0; spec.dim];
    for (c, &p) in pts.iter().enumerate() {
        spec.eval(p, &mut buf);
        m.column_mut(c).copy_from_slice(&buf);
    }
    m
}

/// `(d/dx, d/dy)` value matrices, each `dim x npts`.
pub fn eval_basis_grad(spec: &BasisSpec, pts: &[Point2]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut gx = DMatrix::zeros(spec.dim, pts.len());
    let mut gy = DMatrix::zeros(spec.dim, pts.len());
    let (mut v, mut bx, mut by) = (vec![0.0; spec.dim], vec![0.0; spec.dim], vec![0.0; spec.dim]);
    for (c, &p) in pts.iter().enumerate() {
        spec.eval_with_grad(p, &mut v, &mut bx, &mut by);
        gx.column_mut(c).copy_from_slice(&bx);
        gy.column_mut(c).copy_from_slice(&by);
    }
    (gx, gy)
}

/// Scalar mass matrix of the basis over a quadrature rule.
pub fn mass_matrix(spec: &BasisSpec, rule: &QuadRule) -> DMatrix<f64> {
    let phi = eval_basis(spec, &rule.points);
    let mut scaled = phi.clone();
    for (c, w) in rule.weights.iter().enumerate() {
        scaled.column_mut(c).scale_mut(*w);
    }
    &scaled * phi.transpose()
}

/// L2 projection of `f` onto the basis of the polygon `pts`.
pub fn l2_project(
    pts: &[Point2],
    spec: &BasisSpec,
    f: impl Fn(Point2) -> f64,
) -> Result<DVector<f64>, BasisError> {
    let rule = volume_quadrature(pts, 2 * spec.degree + 4)?;
    let mass = mass_matrix(spec, &rule);
    let phi = eval_basis(spec, &rule.points);
    let fw = DVector::from_iterator(rule.len(), rule.points.iter().zip(&rule.weights).map(|(&p, &w)| w * f(p)));
    let rhs = &phi * fw;
    let chol = mass.cholesky().ok_or(BasisError::SingularMass(spec.element))?;
    Ok(chol.solve(&rhs))
}

/// Evaluates the expansion `coeffs` at `p`.
pub fn eval_expansion(spec: &BasisSpec, coeffs: &[f64], p: Point2) -> f64 {
    let mut buf = [0.0; basis_dim(MAX_DEGREE)];
    spec.eval(p, &mut buf);
    buf[..spec.dim].iter().zip(coeffs).map(|(a, b)| a * b).sum()
}
