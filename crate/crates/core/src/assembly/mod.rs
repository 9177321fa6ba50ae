//! Global stiffness matrix and load vector.
//!
//! [`assemble`] runs the fast block algorithms; [`assemble_definitional`]
//! builds the same system straight from the bilinear form with explicitly
//! computed liftings and serves as the reference in tests.

mod definitional;
mod fast;

use nalgebra::DVector;
use thiserror::Error;

use crate::basis::{BasisError, DegreeVector, DofMap};
use crate::local_ops::{ProblemData, QuadratureCache};
use crate::mesh::Mesh;
use crate::method::{FacetParams, MethodKind};
use crate::par::Execution;
use crate::sparse::{CsrMatrix, SparseError};

pub use definitional::{assemble_definitional, DEFINITIONAL_MAX_DOFS};
pub use fast::{assemble_cdg_br2, assemble_ldg, coupling_pattern};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("method {0} requires one-sided out-sets")]
    MissingOutSets(MethodKind),
    #[error("facet parameters are for {found}, assembler expects {expected}")]
    MethodMismatch { expected: &'static str, found: MethodKind },
    #[error("LDG penalty parameters missing")]
    MissingEta,
    #[error("definitional assembly limited to {limit} dofs, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("degree vector does not match the mesh")]
    DegreeMismatch,
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: DVector<f64>,
    pub dofs: DofMap,
    pub method: MethodKind,
    /// Number of stored element-pair blocks.
    pub n_blocks: usize,
    /// Wall time of the assembly loop in seconds.
    pub t_assembly: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    pub exec: Execution,
    /// Elements processed per parallel batch before scattering.
    pub chunk: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { exec: Execution::Auto, chunk: 512 }
    }
}

/// Dispatches on `params.method`.
pub fn assemble(
    mesh: &Mesh,
    degrees: &DegreeVector,
    params: &FacetParams,
    data: &ProblemData,
    quad: &QuadratureCache,
    opts: AssemblyOptions,
) -> Result<AssembledSystem, AssemblyError> {
    match params.method {
        MethodKind::Cdg | MethodKind::Br2 => assemble_cdg_br2(mesh, degrees, params, data, quad, opts),
        MethodKind::LdgW | MethodKind::LdgF => assemble_ldg(mesh, degrees, params, data, quad, opts),
    }
}

/// `max |A - B| / max |B|` over the union of both patterns.
pub fn relative_max_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    let scale = b.max_abs().max(f64::MIN_POSITIVE);
    let mut d: f64 = 0.0;
    for i in 0..a.n {
        let (ca, va) = a.row(i);
        for (&j, &v) in ca.iter().zip(va) {
            d = d.max((v - b.get(i, j)).abs());
        }
        let (cb, vb) = b.row(i);
        for (&j, &v) in cb.iter().zip(vb) {
            d = d.max((v - a.get(i, j)).abs());
        }
    }
    d / scale
}
