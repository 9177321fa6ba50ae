//! The six driver studies.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::report::{linear_fit, ReportRow, StudyReport};
use super::{degree_vector, run_case, CaseOptions, CaseResult, Diagnostics, HarnessError, MeshSpec, MeshType, RunConfig};
use crate::analysis::centroid_values;
use crate::basis::DegreeVector;
use crate::eigen::SparseCholesky;
use crate::mesh::{Mesh, MeshFile};
use crate::method::{MethodKind, Orientation};
use crate::solve::SolveOptions;

/// Refinement levels of an h-study (element count doubles per level).
pub const H_LEVELS: u32 = 5;
/// Levels of each χ-study convergence sequence.
pub const CHI_LEVELS: u32 = 4;
/// Degrees of a p-study when the config lists only one.
pub const P_STUDY_MAX: usize = 7;
/// Condition numbers are computed up to this many unknowns in the
/// comparison study.
pub const COND_LIMIT: usize = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Solve,
    HStudy,
    PStudy,
    ChiStudy,
    Compare,
    Vardeg,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Solve => "solve",
            StudyKind::HStudy => "h-study",
            StudyKind::PStudy => "p-study",
            StudyKind::ChiStudy => "chi-study",
            StudyKind::Compare => "compare",
            StudyKind::Vardeg => "vardeg",
        }
    }
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [StudyKind::Solve, StudyKind::HStudy, StudyKind::PStudy, StudyKind::ChiStudy, StudyKind::Compare, StudyKind::Vardeg]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown study '{s}'"))
    }
}

fn solver_opts(cfg: &RunConfig) -> SolveOptions {
    SolveOptions { tol: cfg.solver_tol, maxit: cfg.solver_maxit, ..Default::default() }
}

fn case_opts(cfg: &RunConfig, diagnostics: Diagnostics) -> CaseOptions {
    CaseOptions { solver: solver_opts(cfg), diagnostics, ..Default::default() }
}

/// Runs `kind` and, with `out`, writes `report.csv`, `fits.csv` and the
/// study's artifacts into that directory.
pub fn run_study(kind: StudyKind, cfg: &RunConfig, out: Option<&Path>) -> Result<StudyReport, HarnessError> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let report = match kind {
        StudyKind::Solve => run_solve(cfg, out)?,
        StudyKind::HStudy => run_h_study(cfg, H_LEVELS)?,
        StudyKind::PStudy => run_p_study(cfg)?,
        StudyKind::ChiStudy => run_chi_study(cfg, CHI_LEVELS)?,
        StudyKind::Compare => run_compare(cfg, H_LEVELS, out)?,
        StudyKind::Vardeg => run_variable_degree(cfg, out)?.report,
    };
    if let Some(dir) = out {
        report.write_csv(&dir.join("report.csv"))?;
        report.write_fits_csv(&dir.join("fits.csv"))?;
        if !report.notes.is_empty() {
            std::fs::write(dir.join("notes.txt"), report.notes.join("\n") + "\n")?;
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct SolutionRun<'a> {
    label: &'a str,
    method: &'a str,
    failed: bool,
    degrees: &'a [usize],
    offsets: Vec<usize>,
    coefficients: Vec<Vec<f64>>,
    centroid_values: Vec<f64>,
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    study: &'a str,
    mesh: MeshFile,
    runs: Vec<SolutionRun<'a>>,
}

fn solution_run<'a>(label: &'a str, mesh: &Mesh, case: &'a CaseResult) -> SolutionRun<'a> {
    let dofs = &case.system.dofs;
    let ne = mesh.n_elements();
    let (coefficients, values) = match &case.solution {
        Some(sol) => (
            (0..ne).map(|k| sol.coeffs.rows(dofs.offset(k), dofs.dim(k)).iter().copied().collect()).collect(),
            centroid_values(mesh, &case.degrees, &sol.coeffs),
        ),
        None => (vec![Vec::new(); ne], vec![f64::NAN; ne]),
    };
    SolutionRun {
        label,
        method: case.system.method.name(),
        failed: case.failed(),
        degrees: case.degrees.as_slice(),
        offsets: (0..ne).map(|k| dofs.offset(k)).collect(),
        coefficients,
        // NaN is not valid JSON; failed runs export nulls
        centroid_values: values,
    }
}

fn write_solution(path: &Path, study: &str, mesh: &Mesh, runs: Vec<SolutionRun<'_>>) -> Result<(), HarnessError> {
    let file = SolutionFile { study, mesh: MeshFile::from_mesh(mesh), runs };
    let json = serde_json::to_string_pretty(&file).map_err(|e| HarnessError::Io(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// One assemble + solve + error evaluation; writes `matrix.mtx`,
/// `pattern.csv` and `solution.json` with `out`.
pub fn run_solve(cfg: &RunConfig, out: Option<&Path>) -> Result<StudyReport, HarnessError> {
    let mesh = MeshSpec::from_config(cfg).build()?;
    let degrees = degree_vector(&mesh, cfg.degree_rule, cfg.degrees[0])?;
    let small = crate::basis::DofMap::new(&degrees).n_dofs() <= COND_LIMIT;
    let diag = Diagnostics { lambda_min: small, cond2: small };
    let case = run_case(&mesh, degrees, &cfg.flux_config(cfg.method), &cfg.solution(), &case_opts(cfg, diag))?;
    let mut report = StudyReport::default();
    report.rows.push(ReportRow::from_case("solve", cfg.mesh_type.name(), &mesh, &case));
    if let Some(e) = &case.solve_error {
        report.notes.push(format!("solve failed: {e}"));
    }
    if let Some(dir) = out {
        case.system.matrix.write_matrix_market(dir.join("matrix.mtx"), true)?;
        case.system.matrix.write_pattern_csv(dir.join("pattern.csv"))?;
        write_solution(&dir.join("solution.json"), "solve", &mesh, vec![solution_run("solve", &mesh, &case)])?;
    }
    Ok(report)
}

/// Convergence under mesh refinement for each configured degree.
pub fn run_h_study(cfg: &RunConfig, levels: u32) -> Result<StudyReport, HarnessError> {
    let base = MeshSpec::from_config(cfg);
    let ms = cfg.solution();
    let flux = cfg.flux_config(cfg.method);
    let meshes: Vec<Mesh> = (0..levels).map(|l| base.refined(l).build()).collect::<Result<_, _>>()?;
    let mut report = StudyReport::default();
    for &p in &cfg.degrees {
        for mesh in &meshes {
            let degrees = degree_vector(mesh, cfg.degree_rule, p)?;
            let case = run_case(mesh, degrees, &flux, &ms, &case_opts(cfg, Diagnostics::default()))?;
            log::info!("h-study p={p} N_el={} err_l2={:?}", mesh.n_elements(), case.err_l2);
            if let Some(e) = &case.solve_error {
                report.notes.push(format!("p={p} N_el={}: {e}", mesh.n_elements()));
            }
            report.rows.push(ReportRow::from_case("h-study", cfg.mesh_type.name(), mesh, &case));
        }
    }
    report.compute_rates();
    Ok(report)
}

/// Result of the exponential-decay check of a p-study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PStudyFit {
    /// Largest ratio of consecutive L2 errors.
    pub max_ratio: f64,
    /// Slope of `log(err)` against `√N_dofs`.
    pub slope: f64,
    pub r2: f64,
}

pub fn p_study_fit(rows: &[ReportRow]) -> Option<PStudyFit> {
    let errs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.err_l2.map(|e| ((r.n_dofs as f64).sqrt(), e))).collect();
    if errs.len() < 2 {
        return None;
    }
    let max_ratio = errs.windows(2).map(|w| w[1].1 / w[0].1).fold(f64::MIN, f64::max);
    let x: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.1.ln()).collect();
    let (slope, _, r2) = linear_fit(&x, &y)?;
    Some(PStudyFit { max_ratio, slope, r2 })
}

/// Fixed mesh, increasing degree.
pub fn run_p_study(cfg: &RunConfig) -> Result<StudyReport, HarnessError> {
    let mesh = MeshSpec::from_config(cfg).build()?;
    let ms = cfg.solution();
    let flux = cfg.flux_config(cfg.method);
    let ps: Vec<usize> = if cfg.degrees.len() > 1 { cfg.degrees.clone() } else { (1..=P_STUDY_MAX).collect() };
    let mut report = StudyReport::default();
    for p in ps {
        let degrees = degree_vector(&mesh, cfg.degree_rule, p)?;
        let case = run_case(&mesh, degrees, &flux, &ms, &case_opts(cfg, Diagnostics::default()))?;
        report.rows.push(ReportRow::from_case("p-study", cfg.mesh_type.name(), &mesh, &case));
    }
    if let Some(fit) = p_study_fit(&report.rows) {
        report.notes.push(format!(
            "max successive L2 ratio {:.3e}; log(err) vs sqrt(N_dofs): slope {:.4}, R^2 {:.4}",
            fit.max_ratio, fit.slope, fit.r2
        ));
    }
    Ok(report)
}

/// χ settings compared by the χ-study: the default rule and two constants.
pub const CHI_MODES: [Option<f64>; 3] = [None, Some(1.0), Some(0.1)];

pub fn chi_label(chi: Option<f64>) -> String {
    match chi {
        None => "chi-study:chi=rule".into(),
        Some(x) => format!("chi-study:chi={x}"),
    }
}

/// Constant χ values of the λ_min sweep.
pub const CHI_SWEEP: [f64; 9] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

pub fn chi_sweep_label(chi: f64, level: &str) -> String {
    format!("chi-sweep-{level}:chi={chi}")
}

pub fn chi_eig_label(chi: Option<f64>, level: &str) -> String {
    match chi {
        None => format!("chi-eig-{level}:chi=rule"),
        Some(x) => format!("chi-eig-{level}:chi={x}"),
    }
}

/// Mesh spec of `family` with roughly `n_el` elements.
pub fn spec_with_elements(family: MeshType, n_el: usize, seed: u64) -> MeshSpec {
    let n = match family {
        MeshType::Cartesian => (n_el as f64).sqrt().round() as usize,
        MeshType::Triangular => (n_el as f64 / 2.0).sqrt().round() as usize,
        _ => n_el,
    };
    MeshSpec { family, n: n.max(1), file: None, seed }
}

pub fn chi_between_label(level: &str) -> String {
    format!("chi-between-{level}")
}

fn eigen_case(cfg: &RunConfig, mesh: &Mesh, degrees: &DegreeVector, chi: Option<f64>) -> Result<CaseResult, HarnessError> {
    let mut c = cfg.clone();
    c.chi_override = chi;
    let opts = CaseOptions { skip_solve: true, ..case_opts(&c, Diagnostics { lambda_min: true, cond2: false }) };
    run_case(mesh, degrees.clone(), &c.flux_config(cfg.method), &cfg.solution(), &opts)
}

/// Smallest constant χ for which the matrix on `mesh` is positive definite,
/// by bisection in `log χ` on the success of a Cholesky factorization
/// (`λ_min` is nondecreasing in χ). Infinite if χ = 10³ is still indefinite.
pub fn chi_threshold(cfg: &RunConfig, mesh: &Mesh, degrees: &DegreeVector) -> Result<f64, HarnessError> {
    let definite = |chi: f64| -> Result<bool, HarnessError> {
        let mut c = cfg.clone();
        c.chi_override = Some(chi);
        let opts = CaseOptions { skip_solve: true, ..case_opts(&c, Diagnostics::default()) };
        let case = run_case(mesh, degrees.clone(), &c.flux_config(cfg.method), &cfg.solution(), &opts)?;
        Ok(SparseCholesky::new(&case.system.matrix).is_some())
    };
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
    if definite(lo.exp())? {
        return Ok(lo.exp());
    }
    if !definite(hi.exp())? {
        return Ok(f64::INFINITY);
    }
    for _ in 0..CHI_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if definite(mid.exp())? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// Bisection steps of [`chi_threshold`] (relative accuracy about 2e-4).
pub const CHI_BISECTION_STEPS: usize = 16;

/// For each mesh family and χ setting: a p=4 convergence sequence starting
/// at about `mesh.n` elements, plus `λ_min` at p ∈ {1, 4} on the coarse mesh
/// and on one about ten times finer.
pub fn run_chi_study(cfg: &RunConfig, levels: u32) -> Result<StudyReport, HarnessError> {
    let ms = cfg.solution();
    let mut report = StudyReport::default();
    for family in MeshType::FAMILIES {
        let base = spec_with_elements(family, cfg.mesh_n, cfg.seed);
        let seq: Vec<Mesh> = (0..levels).map(|l| base.refined(l).build()).collect::<Result<_, _>>()?;
        let coarse = &seq[0];
        let fine = spec_with_elements(family, 10 * cfg.mesh_n, cfg.seed).build()?;
        for chi in CHI_MODES {
            let mut c = cfg.clone();
            c.chi_override = chi;
            let flux = c.flux_config(cfg.method);
            let label = chi_label(chi);
            for mesh in &seq {
                let degrees = degree_vector(mesh, crate::harness::DegreeRule::Uniform, 4)?;
                let case = run_case(mesh, degrees, &flux, &ms, &case_opts(&c, Diagnostics::default()))?;
                if let Some(e) = &case.solve_error {
                    report.notes.push(format!("{label} {family} N_el={}: {e}", mesh.n_elements()));
                }
                report.rows.push(ReportRow::from_case(&label, family.name(), mesh, &case));
            }
            for (level, mesh) in [("coarse", coarse), ("fine", &fine)] {
                for p in [1, 4] {
                    let degrees = degree_vector(mesh, crate::harness::DegreeRule::Uniform, p)?;
                    let opts = CaseOptions {
                        skip_solve: true,
                        ..case_opts(&c, Diagnostics { lambda_min: true, cond2: false })
                    };
                    let case = run_case(mesh, degrees, &flux, &ms, &opts)?;
                    let st = mesh.stats();
                    report.notes.push(format!(
                        "{} {family} N_el={} p={p} mean facets/element {:.2} lambda_min {:.4e}",
                        chi_eig_label(chi, level),
                        mesh.n_elements(),
                        st.mean_facets_per_element,
                        case.lambda_min.unwrap_or(f64::NAN)
                    ));
                    report.rows.push(ReportRow::from_case(&chi_eig_label(chi, level), family.name(), mesh, &case));
                }
            }
        }
        // λ_min against constant χ: coarse at p ∈ {1, 4}, fine at p = 1
        let mut thresholds = Vec::new();
        for (level, mesh, p) in [("coarse", coarse, 1), ("coarse", coarse, 4), ("fine", &fine, 1)] {
            let degrees = degree_vector(mesh, crate::harness::DegreeRule::Uniform, p)?;
            for chi in CHI_SWEEP {
                let case = eigen_case(cfg, mesh, &degrees, Some(chi))?;
                report.rows.push(ReportRow::from_case(&chi_sweep_label(chi, level), family.name(), mesh, &case));
            }
            let t = chi_threshold(cfg, mesh, &degrees)?;
            report.notes.push(format!(
                "chi-threshold-{level} {family} N_el={} p={p} mean facets/element {:.2}: positive definite iff chi > {t:.4}",
                mesh.n_elements(),
                mesh.stats().mean_facets_per_element
            ));
            thresholds.push(t);
        }
        // a χ between the fine and coarse p=1 thresholds is indefinite on the
        // coarse mesh and definite on the fine one
        let (t_coarse, t_fine) = (thresholds[0], thresholds[2]);
        if t_fine < t_coarse && t_coarse.is_finite() {
            let chi = (t_coarse * t_fine).sqrt();
            for (level, mesh) in [("coarse", coarse), ("fine", &fine)] {
                let degrees = degree_vector(mesh, crate::harness::DegreeRule::Uniform, 1)?;
                let case = eigen_case(cfg, mesh, &degrees, Some(chi))?;
                report.rows.push(ReportRow::from_case(&chi_between_label(level), family.name(), mesh, &case));
            }
        }
    }
    report.compute_rates();
    Ok(report)
}

/// All four methods on a refinement sequence for each configured degree,
/// with timings, nnz and condition numbers.
pub fn run_compare(cfg: &RunConfig, levels: u32, out: Option<&Path>) -> Result<StudyReport, HarnessError> {
    let base = MeshSpec::from_config(cfg);
    let ms = cfg.solution();
    let mut report = StudyReport::default();
    let meshes: Vec<Mesh> = (0..levels).map(|l| base.refined(l).build()).collect::<Result<_, _>>()?;
    for &p in &cfg.degrees {
        for (li, mesh) in meshes.iter().enumerate() {
            for method in MethodKind::ALL {
                let degrees = degree_vector(mesh, cfg.degree_rule, p)?;
                let small = crate::basis::DofMap::new(&degrees).n_dofs() <= COND_LIMIT;
                let diag = Diagnostics { lambda_min: small, cond2: small };
                let case = run_case(mesh, degrees, &cfg.flux_config(method), &ms, &case_opts(cfg, diag))?;
                log::info!(
                    "compare p={p} N_el={} {method}: t_asm {:.3}s t_solve {:?}",
                    mesh.n_elements(),
                    case.system.t_assembly,
                    case.solution.as_ref().map(|s| s.t_solve)
                );
                if let (Some(dir), 0) = (out, li) {
                    case.system.matrix.write_pattern_csv(dir.join(format!("pattern_{}_p{p}.csv", method.name())))?;
                }
                report.rows.push(ReportRow::from_case("compare", cfg.mesh_type.name(), mesh, &case));
            }
        }
    }
    report.compute_rates();
    Ok(report)
}

/// Both orientation runs of the variable-degree experiment.
#[derive(Debug, Clone)]
pub struct VardegOutcome {
    pub report: StudyReport,
    pub correct: CaseResult,
    pub inverted: CaseResult,
    /// Solver breakdown, `λ_min ≤ 0`, or an error ten times the correct one.
    pub inverted_flagged: bool,
}

/// Steep front with degree 2 near it and 1 elsewhere, averaged from the
/// higher-degree side (correct) and from the lower-degree side (inverted).
pub fn run_variable_degree(cfg: &RunConfig, out: Option<&Path>) -> Result<VardegOutcome, HarnessError> {
    let mesh = MeshSpec::from_config(cfg).build()?;
    let rule = match cfg.degree_rule {
        super::DegreeRule::Uniform => super::DegreeRule::DEFAULT_ANNULUS,
        r => r,
    };
    let degrees = degree_vector(&mesh, rule, 1)?;
    let ms = cfg.solution();
    let small = crate::basis::DofMap::new(&degrees).n_dofs() <= COND_LIMIT;
    let diag = Diagnostics { lambda_min: small, cond2: false };
    let mut runs = Vec::new();
    let mut report = StudyReport::default();
    for o in [Orientation::Correct, Orientation::Inverted] {
        let mut c = cfg.clone();
        c.orientation = o;
        let case = run_case(&mesh, degrees.clone(), &c.flux_config(cfg.method), &ms, &case_opts(&c, diag))?;
        report.rows.push(ReportRow::from_case(&format!("vardeg:{o}"), cfg.mesh_type.name(), &mesh, &case));
        runs.push(case);
    }
    let inverted = runs.pop().expect("two runs");
    let correct = runs.pop().expect("two runs");
    let ratio = match (correct.err_l2, inverted.err_l2) {
        (Some(a), Some(b)) if a > 0.0 => b / a,
        _ => f64::INFINITY,
    };
    let inverted_flagged = inverted.failed() || !(ratio <= 10.0);
    report.notes.push(format!(
        "correct: failed={} err_l2={:?} lambda_min={:?}; inverted: failed={} err_l2={:?} lambda_min={:?} solve_error={:?}; error ratio {:.3e}; inverted flagged: {}",
        correct.failed(),
        correct.err_l2,
        correct.lambda_min,
        inverted.failed(),
        inverted.err_l2,
        inverted.lambda_min,
        inverted.solve_error,
        ratio,
        inverted_flagged
    ));
    if let Some(dir) = out {
        write_solution(
            &dir.join("solution.json"),
            "vardeg",
            &mesh,
            vec![solution_run("correct", &mesh, &correct), solution_run("inverted", &mesh, &inverted)],
        )?;
    }
    Ok(VardegOutcome { report, correct, inverted, inverted_flagged })
}
