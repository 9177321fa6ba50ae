//! Block assembly without global auxiliary matrices.
//!
//! Each element produces its dense block contributions independently (in
//! parallel when enabled); batches are then scattered into a CSR matrix whose
//! pattern was fixed up front from the mesh topology.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{AssembledSystem, AssemblyError, AssemblyOptions};
use crate::basis::{BasisSpec, DegreeVector, DofMap};
use crate::local_ops::{
    bav_diag_from_mass, bav_offdiag_from_mass, dirichlet_vector, facet_mass, ldg_dirichlet_vector, load_vector,
    neumann_vector, ElementOps, ProblemData, QuadratureCache,
};
use crate::mesh::{FacetKind, Mesh};
use crate::method::{FacetParams, MethodKind};
use crate::par::map_indices_with;
use crate::sparse::BlockMatrix;

type Block = DMatrix<f64>;

/// Dense contributions of one element.
#[derive(Default)]
struct Contribution {
    blocks: Vec<(usize, usize, Block)>,
    rhs: Vec<(usize, DVector<f64>)>,
}

/// Elements coupled to each element by the method's stencil.
pub fn coupling_pattern(mesh: &Mesh, params: &FacetParams) -> Vec<Vec<usize>> {
    let ne = mesh.n_elements();
    match params.method {
        MethodKind::Cdg | MethodKind::Br2 => mesh.neighbors.clone(),
        MethodKind::LdgW | MethodKind::LdgF => {
            let mut c: Vec<Vec<usize>> = mesh.neighbors.clone();
            for r in 0..ne {
                let set = ldg_loop_set(mesh, params, r);
                for &i in &set {
                    c[i].extend(set.iter().copied());
                }
            }
            for (r, v) in c.iter_mut().enumerate() {
                v.retain(|&e| e != r);
                v.sort_unstable();
                v.dedup();
            }
            c
        }
    }
}

/// `N^loop_r ∪ {r}`, sorted.
fn ldg_loop_set(mesh: &Mesh, params: &FacetParams, r: usize) -> Vec<usize> {
    let mut s = match (&params.out_sets, params.method) {
        (Some(o), MethodKind::LdgW) => o.neighbors[r].clone(),
        _ => mesh.neighbors[r].clone(),
    };
    s.push(r);
    s.sort_unstable();
    s.dedup();
    s
}

fn check_inputs(mesh: &Mesh, degrees: &DegreeVector) -> Result<(), AssemblyError> {
    if degrees.len() != mesh.n_elements() {
        return Err(AssemblyError::DegreeMismatch);
    }
    Ok(())
}

fn run(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    opts: AssemblyOptions,
    element: impl Fn(usize) -> Result<Contribution, AssemblyError> + Sync + Send,
) -> Result<AssembledSystem, AssemblyError> {
    let start = Instant::now();
    let dofs = DofMap::new(degrees);
    let mut target = BlockMatrix::new(&dofs, &coupling_pattern(mesh, params));
    let mut rhs = DVector::zeros(dofs.n_dofs());
    let ne = mesh.n_elements();
    let chunk = opts.chunk.max(1);
    let mut lo = 0;
    while lo < ne {
        let hi = (lo + chunk).min(ne);
        let batch = map_indices_with(opts.exec, hi - lo, |i| element(lo + i));
        for c in batch {
            let c = c?;
            for (r, s, b) in &c.blocks {
                target.add_block(*r, *s, b)?;
            }
            for (r, v) in &c.rhs {
                let mut dst = rhs.rows_mut(dofs.offset(*r), dofs.dim(*r));
                dst += v;
            }
        }
        lo = hi;
    }
    let n_blocks = target.n_blocks();
    Ok(AssembledSystem {
        matrix: target.into_csr(),
        rhs,
        dofs,
        method: params.method,
        n_blocks,
        t_assembly: start.elapsed().as_secs_f64(),
    })
}

fn neumann_load(mesh: &Mesh, data: &ProblemData, quad: &QuadratureCache, spec: &BasisSpec, r: usize, b: &mut DVector<f64>) {
    for &f in &mesh.elements[r].facets {
        if mesh.facets[f].kind == FacetKind::Neumann {
            *b += neumann_vector(spec, &quad.facet[f], &*data.g_n, mesh.facets[f].normal);
        }
    }
}

/// Compact DG and BR2 assembly.
pub fn assemble_cdg_br2(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    data: &ProblemData,
    quad: &QuadratureCache,
    opts: AssemblyOptions,
) -> Result<AssembledSystem, AssemblyError> {
    check_inputs(mesh, degrees)?;
    match params.method {
        MethodKind::Cdg if params.out_sets.is_none() => return Err(AssemblyError::MissingOutSets(MethodKind::Cdg)),
        MethodKind::Cdg | MethodKind::Br2 => {}
        other => return Err(AssemblyError::MethodMismatch { expected: "CDG or BR2", found: other }),
    }
    let two_sided = params.method == MethodKind::Br2;
    run(mesh, degrees, params, opts, |r| {
        let spec = BasisSpec::for_element(mesh, degrees, r);
        let ops = ElementOps::compute(spec.clone(), &quad.volume[r], data)?;
        let minv = &ops.ms_inv;
        let mut a_rr = ops.stiffness();
        let mut b_r = ops.load.clone();
        let mut out = Contribution::default();

        // B^av = w (n ⊗ P) and 𝒟 = κ ⊗ Ms⁻¹, so every facet product
        // collapses to scalar blocks weighted by n·κn
        for f in params.loop_facets(mesh, r) {
            let facet = &mesh.facets[f];
            let rule = &quad.facet[f];
            let n_r = mesh.outward_normal(f, r);
            let chi = params.chi[f];
            let w = if two_sided && facet.is_interior() { 0.5 } else { 1.0 };
            let nkn = n_r.dot(data.kappa.apply(n_r));
            let c = chi * w * w * nkn;
            let p_rr = facet_mass(rule, &spec, &spec);
            // X + Xᵀ + c PᵀMs⁻¹P = Y + Yᵀ with Y = (w Gnᵀ + c/2 Pᵀ) Ms⁻¹P, as
            // PᵀMs⁻¹P is symmetric
            let lhs = ops.grad_along(n_r).transpose() * w + p_rr.transpose() * (0.5 * c);
            let y = &lhs * (minv * &p_rr);
            a_rr += &y + y.transpose();
            match facet.other(r) {
                Some(s) => {
                    let spec_s = BasisSpec::for_element(mesh, degrees, s);
                    let p_rs = facet_mass(rule, &spec, &spec_s);
                    let q_rs = minv * &p_rs;
                    let a_rs = -((&lhs + p_rr.transpose() * (0.5 * c)) * &q_rs);
                    let a_ss = p_rs.transpose() * &q_rs * c;
                    out.blocks.push((s, r, a_rs.transpose()));
                    out.blocks.push((r, s, a_rs));
                    out.blocks.push((s, s, a_ss));
                }
                None => {
                    // w = 1 on boundary facets
                    let mg = minv * load_vector(&spec, rule, &*data.g_d);
                    b_r += (&lhs + p_rr.transpose() * (0.5 * c)) * &mg;
                }
            }
        }
        neumann_load(mesh, data, quad, &spec, r, &mut b_r);
        out.blocks.push((r, r, a_rr));
        out.rhs.push((r, b_r));
        Ok(out)
    })
}

/// Local DG assembly (weighted or full stencil).
pub fn assemble_ldg(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    data: &ProblemData,
    quad: &QuadratureCache,
    opts: AssemblyOptions,
) -> Result<AssembledSystem, AssemblyError> {
    check_inputs(mesh, degrees)?;
    match params.method {
        MethodKind::LdgW if params.out_sets.is_none() => return Err(AssemblyError::MissingOutSets(MethodKind::LdgW)),
        MethodKind::LdgW | MethodKind::LdgF => {}
        other => return Err(AssemblyError::MethodMismatch { expected: "LDG_w or LDG_f", found: other }),
    }
    let eta = params.eta.as_ref().ok_or(AssemblyError::MissingEta)?;
    let weighted = params.method == MethodKind::LdgW;
    run(mesh, degrees, params, opts, |r| {
        let spec = BasisSpec::for_element(mesh, degrees, r);
        let ops = ElementOps::compute(spec.clone(), &quad.volume[r], data)?;
        let loop_set = ldg_loop_set(mesh, params, r);
        let pos = |e: usize| loop_set.binary_search(&e).expect("element in loop set");
        let mut b_blocks: Vec<Block> = loop_set
            .iter()
            .map(|&e| DMatrix::zeros(2 * spec.dim, BasisSpec::for_element(mesh, degrees, e).dim))
            .collect();
        b_blocks[pos(r)] += ops.grad();
        let mut g_r = DVector::zeros(2 * spec.dim);
        let mut has_dirichlet = false;
        let mut b_r = ops.load.clone();
        let mut out = Contribution::default();
        let mut s_rr = DMatrix::zeros(spec.dim, spec.dim);
        let out_facets = params.out_sets.as_ref().map(|o| &o.facets[r]);

        for &f in &mesh.elements[r].facets {
            let facet = &mesh.facets[f];
            if facet.kind == FacetKind::Neumann {
                continue;
            }
            let rule = &quad.facet[f];
            let n_r = mesh.outward_normal(f, r);
            let p_rr = facet_mass(rule, &spec, &spec);
            s_rr += &p_rr * eta[f];
            let lifted = !weighted || out_facets.is_some_and(|o| o.contains(&f));
            match facet.other(r) {
                Some(s) => {
                    let spec_s = BasisSpec::for_element(mesh, degrees, s);
                    let p_rs = facet_mass(rule, &spec, &spec_s);
                    out.blocks.push((r, s, &p_rs * (-eta[f])));
                    if lifted {
                        let w = if weighted { 1.0 } else { 0.5 };
                        b_blocks[pos(r)] += bav_diag_from_mass(&p_rr, n_r, w);
                        b_blocks[pos(s)] += bav_offdiag_from_mass(&p_rs, n_r, w);
                    }
                }
                None => {
                    has_dirichlet = true;
                    b_blocks[pos(r)] += bav_diag_from_mass(&p_rr, n_r, 1.0);
                    g_r += dirichlet_vector(&spec, rule, &*data.g_d, n_r);
                    b_r += ldg_dirichlet_vector(&spec, rule, &*data.g_d, eta[f]);
                }
            }
        }
        out.blocks.push((r, r, s_rr));

        let db: Vec<Block> = b_blocks.iter().map(|b| ops.apply_d(b)).collect();
        for (i, &ei) in loop_set.iter().enumerate() {
            let bt = b_blocks[i].transpose();
            out.blocks.push((ei, ei, &bt * &db[i]));
            for (j, &ej) in loop_set.iter().enumerate().skip(i + 1) {
                let blk = &bt * &db[j];
                out.blocks.push((ej, ei, blk.transpose()));
                out.blocks.push((ei, ej, blk));
            }
        }
        if has_dirichlet {
            let dg = ops.apply_d(&DMatrix::from_column_slice(g_r.len(), 1, g_r.as_slice())).column(0).into_owned();
            for (i, &ei) in loop_set.iter().enumerate() {
                let v = -(b_blocks[i].transpose() * &dg);
                if ei == r {
                    b_r += v;
                } else {
                    out.rhs.push((ei, v));
                }
            }
        }
        neumann_load(mesh, data, quad, &spec, r, &mut b_r);
        out.rhs.push((r, b_r));
        Ok(out)
    })
}
