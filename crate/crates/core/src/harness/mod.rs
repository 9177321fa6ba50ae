//! Study driver behind the command-line tool: configuration, mesh sequences,
//! single assemble/solve/evaluate cases and CSV/JSON reports.

mod config;
mod report;
mod studies;

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::{error_cdg_norm, error_l2, AnalysisError, ManufacturedSolution};
use crate::assembly::{assemble, AssembledSystem, AssemblyError, AssemblyOptions};
use crate::basis::{BasisError, DegreeVector};
use crate::eigen::{condition_from_min, min_eigenvalue, EigenError};
use crate::local_ops::QuadratureCache;
use crate::mesh::{agglomerate, build_cartesian, build_triangular, build_voronoi, load_mesh, Mesh, MeshError};
use crate::method::{FacetParams, FluxConfig, MethodError};
use crate::solve::{solve, DiscreteSolution, SolveOptions};

pub use config::{DegreeRule, MeshType, RunConfig, KEYS};
pub use report::{fit_rate, linear_fit, RateFit, ReportRow, StudyReport, CSV_COLUMNS};
pub use studies::{
    chi_between_label, chi_eig_label, chi_label, chi_sweep_label, chi_threshold, p_study_fit, run_chi_study, run_compare, run_h_study, run_p_study, run_solve, run_study,
    run_variable_degree, spec_with_elements, PStudyFit, StudyKind, VardegOutcome, CHI_BISECTION_STEPS, CHI_LEVELS, CHI_MODES, CHI_SWEEP, COND_LIMIT,
    H_LEVELS, P_STUDY_MAX,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}, key '{key}': {msg}")]
    Config { line: usize, key: String, msg: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Method(#[from] MethodError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Lloyd steps for generated Voronoi meshes.
pub const LLOYD_ITERS: usize = 100;
/// Agglomerated meshes are cut from a Voronoi base of at least this size.
pub const AGGLOMERATION_BASE_MIN: usize = 1600;

/// A mesh of `family` at refinement `level` (element count doubling per
/// level): `n·2^level` cells for Voronoi-based families, `round(n·√2^level)`
/// cells per side for structured ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub family: MeshType,
    pub n: usize,
    pub file: Option<PathBuf>,
    pub seed: u64,
}

impl MeshSpec {
    pub fn from_config(c: &RunConfig) -> Self {
        Self { family: c.mesh_type, n: c.mesh_n, file: c.mesh_file.clone(), seed: c.seed }
    }

    pub fn refined(&self, level: u32) -> Self {
        let n = match self.family {
            MeshType::Cartesian | MeshType::Triangular => (self.n as f64 * 2f64.powf(level as f64 / 2.0)).round() as usize,
            MeshType::Voronoi | MeshType::Agglomerated => self.n << level,
            MeshType::File => self.n,
        };
        Self { n, ..self.clone() }
    }

    pub fn build(&self) -> Result<Mesh, HarnessError> {
        Ok(match self.family {
            MeshType::Cartesian => build_cartesian(self.n, self.n)?,
            MeshType::Triangular => build_triangular(self.n, self.n)?,
            MeshType::Voronoi => build_voronoi(self.n, LLOYD_ITERS, self.seed)?,
            MeshType::Agglomerated => {
                // coarse agglomerates absorb many base cells, so they carry
                // many facets; refining lowers the cluster size
                let base_n = (4 * self.n).max(AGGLOMERATION_BASE_MIN);
                let target = (base_n as f64 / self.n as f64).round().max(2.0) as usize;
                let base = build_voronoi(base_n, LLOYD_ITERS, self.seed)?;
                agglomerate(&base, target, self.seed)?
            }
            MeshType::File => {
                let path = self.file.as_ref().ok_or_else(|| HarnessError::Io("mesh.file not set".into()))?;
                load_mesh(path)?
            }
        })
    }
}

/// Degrees for `mesh` under `rule` (uniform rule uses `p`).
pub fn degree_vector(mesh: &Mesh, rule: DegreeRule, p: usize) -> Result<DegreeVector, BasisError> {
    match rule {
        DegreeRule::Uniform => DegreeVector::uniform(mesh.n_elements(), p),
        DegreeRule::Annulus { r2, width, p_in, p_out } => DegreeVector::new(
            mesh.elements
                .iter()
                .map(|e| {
                    let c = e.centroid;
                    if (c.x * c.x + c.y * c.y - r2).abs() < width {
                        p_in
                    } else {
                        p_out
                    }
                })
                .collect(),
        ),
    }
}

/// Which matrix diagnostics to compute for a case.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub lambda_min: bool,
    pub cond2: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CaseOptions {
    pub solver: SolveOptions,
    pub assembly: AssemblyOptions,
    pub diagnostics: Diagnostics,
    /// Skip the solve (diagnostics only).
    pub skip_solve: bool,
}

/// Outcome of assembling, solving and evaluating one configuration.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub params: FacetParams,
    pub system: AssembledSystem,
    pub degrees: DegreeVector,
    pub solution: Option<DiscreteSolution>,
    /// Solver failure message, e.g. detected indefiniteness.
    pub solve_error: Option<String>,
    pub err_l2: Option<f64>,
    pub err_cdg: Option<f64>,
    pub lambda_min: Option<f64>,
    pub cond2: Option<f64>,
}

impl CaseResult {
    /// Solver breakdown, non-convergence, or a non-positive `λ_min`.
    pub fn failed(&self) -> bool {
        self.solve_error.is_some()
            || self.solution.as_ref().is_some_and(|s| !s.converged || !s.positive_definite)
            || self.lambda_min.is_some_and(|l| l <= 0.0)
            || self.err_l2.is_some_and(|e| !e.is_finite())
    }
}

pub fn run_case(
    mesh: &Mesh,
    degrees: DegreeVector,
    flux: &FluxConfig,
    ms: &ManufacturedSolution,
    opts: &CaseOptions,
) -> Result<CaseResult, HarnessError> {
    let data = ms.problem_data();
    let params = FacetParams::new(mesh, &degrees, data.kappa.norm(), flux)?;
    let quad = QuadratureCache::new(mesh, &degrees)?;
    let system = assemble(mesh, &degrees, &params, &data, &quad, opts.assembly)?;
    drop(quad);
    let mut res = CaseResult {
        params,
        system,
        degrees,
        solution: None,
        solve_error: None,
        err_l2: None,
        err_cdg: None,
        lambda_min: None,
        cond2: None,
    };
    if !opts.skip_solve {
        match solve(&res.system, &opts.solver) {
            Ok(sol) => {
                res.err_l2 = Some(error_l2(mesh, &res.degrees, &sol.coeffs, ms)?);
                res.err_cdg = Some(error_cdg_norm(mesh, &res.degrees, &res.params, &sol.coeffs, ms)?);
                res.solution = Some(sol);
            }
            Err(e) => {
                log::warn!("{}: {e}", flux.method);
                res.solve_error = Some(e.to_string());
            }
        }
    }
    if opts.diagnostics.lambda_min || opts.diagnostics.cond2 {
        let lmin = min_eigenvalue(&res.system.matrix)?;
        res.lambda_min = Some(lmin);
        if opts.diagnostics.cond2 && lmin > 0.0 {
            res.cond2 = Some(condition_from_min(&res.system.matrix, lmin)?);
        }
    }
    Ok(res)
}
