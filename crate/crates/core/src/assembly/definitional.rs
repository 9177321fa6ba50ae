//! Reference assembly straight from the bilinear form.
//!
//! Every local lifting of every basis function is computed by solving the
//! vector mass system of its supporting element(s), with the right-hand side
//! integrated from the jump and the weighted average on the facet. The
//! bilinear form and the load functional are then integrated term by term by
//! volume and facet quadrature. Nothing here reuses the block formulas of the
//! fast assemblers, so agreement between the two is a meaningful check.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{AssembledSystem, AssemblyError};
use crate::basis::{eval_basis, eval_basis_grad, facet_quadrature, volume_quadrature, BasisError, BasisSpec, DegreeVector, DofMap, QuadRule};
use crate::geometry::Point2;
use crate::local_ops::{DiffusionTensor, ProblemData};
use crate::mesh::{FacetKind, Mesh};
use crate::method::FacetParams;
use crate::sparse::CsrMatrix;

pub const DEFINITIONAL_MAX_DOFS: usize = 2000;

struct ElementQuad {
    spec: BasisSpec,
    rule: QuadRule,
    phi: DMatrix<f64>,
    gx: DMatrix<f64>,
    gy: DMatrix<f64>,
    /// Vector mass matrix built entry by entry from `ψ_I · ψ_K`.
    mass: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// Vector field sampled at the quadrature points of one element.
struct Field {
    x: DVector<f64>,
    y: DVector<f64>,
}

impl Field {
    fn zeros(n: usize) -> Self {
        Self { x: DVector::zeros(n), y: DVector::zeros(n) }
    }

    fn from_coeffs(eq: &ElementQuad, c: &DVector<f64>) -> Self {
        let n = eq.spec.dim;
        Self {
            x: eq.phi.tr_mul(&c.rows(0, n).into_owned()),
            y: eq.phi.tr_mul(&c.rows(n, n).into_owned()),
        }
    }

    fn sub(&self, o: &Field) -> Field {
        Field { x: &self.x - &o.x, y: &self.y - &o.y }
    }

    /// `∫ κ a · b` with weights `w`.
    fn kdot(&self, o: &Field, k: &DiffusionTensor, w: &[f64]) -> f64 {
        let [[k11, k12], [k21, k22]] = k.entries();
        (0..w.len())
            .map(|q| {
                let (ax, ay) = (self.x[q], self.y[q]);
                w[q] * ((k11 * ax + k12 * ay) * o.x[q] + (k21 * ax + k22 * ay) * o.y[q])
            })
            .sum()
    }
}

/// `ψ_I(x) = φ_{I mod Λ}(x) e_{I div Λ}`: component and scalar index.
fn split(i: usize, dim: usize) -> (usize, usize) {
    (i / dim, i % dim)
}

fn element_quad(mesh: &Mesh, degrees: &DegreeVector, k: usize) -> Result<ElementQuad, AssemblyError> {
    let spec = BasisSpec::for_element(mesh, degrees, k);
    let rule = volume_quadrature(&mesh.element_points(k), 2 * spec.degree + 4)?;
    let phi = eval_basis(&spec, &rule.points);
    let (gx, gy) = eval_basis_grad(&spec, &rule.points);
    let n = 2 * spec.dim;
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (ca, ia) = split(a, spec.dim);
            let (cb, ib) = split(b, spec.dim);
            if ca != cb {
                continue;
            }
            m[(a, b)] = (0..rule.len()).map(|q| rule.weights[q] * phi[(ia, q)] * phi[(ib, q)]).sum();
        }
    }
    let mass = m.cholesky().ok_or(BasisError::SingularMass(k))?;
    Ok(ElementQuad { spec, rule, phi, gx, gy, mass })
}

/// Lifting supports of a facet with the weight of each side in the average.
fn supports(mesh: &Mesh, params: &FacetParams, f: usize) -> Vec<(usize, f64)> {
    let facet = &mesh.facets[f];
    match facet.adjacent {
        (k1, Some(k2)) => {
            let a = params.alpha[f];
            [(k1, a), (k2, 1.0 - a)].into_iter().filter(|&(_, w)| w != 0.0).collect()
        }
        (k, None) => vec![(k, 1.0)],
    }
}

/// Solves `∫_T L · ψ_I = Σ_q w_q v(x_q) · ψ_I(x_q)` for the coefficients of
/// `L` on `T`, where `v` is a vector sampled at facet points.
fn lift(eq: &ElementQuad, pts: &[Point2], w: &[f64], v: &[Point2]) -> DVector<f64> {
    let phi = eval_basis(&eq.spec, pts);
    let n = eq.spec.dim;
    let mut rhs = DVector::zeros(2 * n);
    for q in 0..pts.len() {
        for i in 0..n {
            rhs[i] += w[q] * v[q].x * phi[(i, q)];
            rhs[n + i] += w[q] * v[q].y * phi[(i, q)];
        }
    }
    eq.mass.solve(&rhs)
}

/// Builds the system from the definition of the bilinear form and load
/// functional. Limited to small problems.
pub fn assemble_definitional(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    data: &ProblemData,
) -> Result<AssembledSystem, AssemblyError> {
    let start = Instant::now();
    if degrees.len() != mesh.n_elements() {
        return Err(AssemblyError::DegreeMismatch);
    }
    let dofs = DofMap::new(degrees);
    let n = dofs.n_dofs();
    if n > DEFINITIONAL_MAX_DOFS {
        return Err(AssemblyError::TooLarge { n, limit: DEFINITIONAL_MAX_DOFS });
    }
    let is_ldg = params.method.is_ldg();
    if is_ldg && params.eta.is_none() {
        return Err(AssemblyError::MissingEta);
    }
    let kappa = &data.kappa;
    let ne = mesh.n_elements();
    let eqs: Vec<ElementQuad> = (0..ne).map(|k| element_quad(mesh, degrees, k)).collect::<Result<_, _>>()?;
    let pmax = degrees.max();

    // Local liftings: per facet, per dof of the adjacent elements, per support.
    struct FacetLift {
        f: usize,
        rule: QuadRule,
        /// (global dof, support element, coefficients)
        pieces: Vec<(usize, usize, DVector<f64>)>,
        /// lifting of g_D on Dirichlet facets
        data_pieces: Vec<(usize, DVector<f64>)>,
    }
    let mut lifts: Vec<FacetLift> = Vec::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        if facet.kind == FacetKind::Neumann {
            continue;
        }
        let rule = facet_quadrature(facet.endpoints[0], facet.endpoints[1], 2 * pmax + 4);
        let n_f = facet.normal;
        let (k1, k2) = facet.adjacent;
        let sup = supports(mesh, params, f);
        let mut pieces = Vec::new();
        for (side, e) in std::iter::once(k1).chain(k2).enumerate() {
            let vals = eval_basis(&eqs[e].spec, &rule.points);
            // ⟦φ⟧ = (φ|K1 - φ|K2) n_F on interior facets, φ n_Ω on the boundary
            let sign = if side == 0 { 1.0 } else { -1.0 };
            for l in 0..eqs[e].spec.dim {
                let jump: Vec<Point2> = (0..rule.len()).map(|q| n_f * (sign * vals[(l, q)])).collect();
                for &(t, wt) in &sup {
                    let w: Vec<f64> = rule.weights.iter().map(|w| w * wt).collect();
                    pieces.push((dofs.offset(e) + l, t, lift(&eqs[t], &rule.points, &w, &jump)));
                }
            }
        }
        let mut data_pieces = Vec::new();
        if facet.kind == FacetKind::Dirichlet {
            let gv: Vec<Point2> = rule.points.iter().map(|&p| n_f * (data.g_d)(p)).collect();
            data_pieces.push((k1, lift(&eqs[k1], &rule.points, &rule.weights, &gv)));
        }
        lifts.push(FacetLift { f, rule, pieces, data_pieces });
    }

    // Global lifting L_h φ_j restricted to each element, and L_h^D(g_D).
    let mut lh: Vec<BTreeMap<usize, DVector<f64>>> = vec![BTreeMap::new(); ne];
    let mut lhd: Vec<DVector<f64>> = eqs.iter().map(|e| DVector::zeros(2 * e.spec.dim)).collect();
    for fl in &lifts {
        for (j, t, c) in &fl.pieces {
            *lh[*t].entry(*j).or_insert_with(|| DVector::zeros(c.len())) += c;
        }
        for (t, c) in &fl.data_pieces {
            lhd[*t] += c;
        }
    }

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);

    for (t, eq) in eqs.iter().enumerate() {
        let nq = eq.rule.len();
        let w = &eq.rule.weights;
        let own = dofs.range(t);
        let mut active: Vec<usize> = own.clone().collect();
        active.extend(lh[t].keys().copied().filter(|j| !own.contains(j)));
        let grad: Vec<Field> = active
            .iter()
            .map(|&j| {
                if own.contains(&j) {
                    let l = j - own.start;
                    Field { x: eq.gx.row(l).transpose(), y: eq.gy.row(l).transpose() }
                } else {
                    Field::zeros(nq)
                }
            })
            .collect();
        let lift_f: Vec<Field> = active
            .iter()
            .map(|j| lh[t].get(j).map_or_else(|| Field::zeros(nq), |c| Field::from_coeffs(eq, c)))
            .collect();
        let diff: Vec<Field> = grad.iter().zip(&lift_f).map(|(g, l)| g.sub(l)).collect();
        for (ii, &i) in active.iter().enumerate() {
            for (jj, &j) in active.iter().enumerate() {
                a[(i, j)] += if is_ldg {
                    diff[jj].kdot(&diff[ii], kappa, w)
                } else {
                    diff[jj].kdot(&grad[ii], kappa, w) - grad[jj].kdot(&lift_f[ii], kappa, w)
                };
            }
        }
        // load
        for l in 0..eq.spec.dim {
            b[own.start + l] += (0..nq).map(|q| w[q] * (data.f)(eq.rule.points[q]) * eq.phi[(l, q)]).sum::<f64>();
        }
        if is_ldg {
            let ld = Field::from_coeffs(eq, &lhd[t]);
            for (ii, &i) in active.iter().enumerate() {
                b[i] -= ld.kdot(&diff[ii], kappa, w);
            }
        }
    }

    for fl in &lifts {
        let f = fl.f;
        let facet = &mesh.facets[f];
        if !is_ldg {
            // χ_F ∫ κ L^F(φ_j) · L^F(φ_i), support by support
            let chi = params.chi[f];
            let mut by_support: BTreeMap<usize, Vec<(usize, Field)>> = BTreeMap::new();
            for (j, t, c) in &fl.pieces {
                by_support.entry(*t).or_default().push((*j, Field::from_coeffs(&eqs[*t], c)));
            }
            for (t, fields) in &by_support {
                let w = &eqs[*t].rule.weights;
                for (i, fi) in fields {
                    for (j, fj) in fields {
                        a[(*i, *j)] += chi * fj.kdot(fi, kappa, w);
                    }
                }
            }
            if facet.kind == FacetKind::Dirichlet {
                // -∫_F g_D κ (∇φ_i - χ_F L_D^F(φ_i)) · n
                let k = facet.adjacent.0;
                let eq = &eqs[k];
                let vals = eval_basis(&eq.spec, &fl.rule.points);
                let (gx, gy) = eval_basis_grad(&eq.spec, &fl.rule.points);
                let n_f = facet.normal;
                for (i, t, c) in &fl.pieces {
                    debug_assert_eq!(*t, k);
                    let l = i - dofs.offset(k);
                    let d = eq.spec.dim;
                    for q in 0..fl.rule.len() {
                        let p = fl.rule.points[q];
                        let lx: f64 = (0..d).map(|m| c[m] * vals[(m, q)]).sum();
                        let ly: f64 = (0..d).map(|m| c[d + m] * vals[(m, q)]).sum();
                        let v = Point2::new(gx[(l, q)] - chi * lx, gy[(l, q)] - chi * ly);
                        b[*i] -= fl.rule.weights[q] * (data.g_d)(p) * kappa.apply(v).dot(n_f);
                    }
                }
            }
        } else {
            // η ∫_F ⟦φ_j⟧ · ⟦φ_i⟧ (scalar product on the boundary)
            let eta = params.eta.as_ref().expect("checked")[f];
            let (k1, k2) = facet.adjacent;
            let mut traces: Vec<(usize, DVector<f64>)> = Vec::new();
            for (side, e) in std::iter::once(k1).chain(k2).enumerate() {
                let vals = eval_basis(&eqs[e].spec, &fl.rule.points);
                let sign = if side == 0 { 1.0 } else { -1.0 };
                for l in 0..eqs[e].spec.dim {
                    traces.push((dofs.offset(e) + l, vals.row(l).transpose() * sign));
                }
            }
            let w = DVector::from_column_slice(&fl.rule.weights);
            for (i, ti) in &traces {
                for (j, tj) in &traces {
                    a[(*i, *j)] += eta * ti.component_mul(tj).dot(&w);
                }
            }
            if facet.kind == FacetKind::Dirichlet {
                let gw: DVector<f64> = DVector::from_iterator(
                    fl.rule.len(),
                    fl.rule.points.iter().zip(&fl.rule.weights).map(|(&p, &wq)| wq * (data.g_d)(p)),
                );
                for (i, ti) in &traces {
                    b[*i] += eta * ti.dot(&gw);
                }
            }
        }
    }

    for facet in mesh.facets.iter().filter(|f| f.kind == FacetKind::Neumann) {
        let k = facet.adjacent.0;
        let rule = facet_quadrature(facet.endpoints[0], facet.endpoints[1], 2 * pmax + 4);
        let vals = eval_basis(&eqs[k].spec, &rule.points);
        for l in 0..eqs[k].spec.dim {
            b[dofs.offset(k) + l] += (0..rule.len())
                .map(|q| rule.weights[q] * (data.g_n)(rule.points[q], facet.normal) * vals[(l, q)])
                .sum::<f64>();
        }
    }

    let matrix = CsrMatrix::from_dense(&a);
    let n_blocks = count_blocks(&matrix, &dofs);
    Ok(AssembledSystem {
        matrix,
        rhs: b,
        dofs,
        method: params.method,
        n_blocks,
        t_assembly: start.elapsed().as_secs_f64(),
    })
}

fn count_blocks(m: &CsrMatrix, dofs: &DofMap) -> usize {
    let mut set = std::collections::BTreeSet::new();
    for i in 0..m.n {
        let r = dofs.element_of(i);
        for &j in m.row(i).0 {
            set.insert((r, dofs.element_of(j)));
        }
    }
    set.len()
}
