//! Report rows, rate fits and CSV output.

use std::path::Path;

use serde::Serialize;

use super::{CaseResult, HarnessError};
use crate::mesh::Mesh;

pub const CSV_COLUMNS: [&str; 18] = [
    "study",
    "method",
    "mesh_type",
    "n_elements",
    "h",
    "p",
    "n_dofs",
    "nnz",
    "err_l2",
    "err_cdg",
    "rate_l2",
    "rate_cdg",
    "t_assembly_s",
    "t_solve_s",
    "lambda_min",
    "cond2",
    "solver_iters",
    "solver_residual",
];

/// One line of `report.csv`; empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub study: String,
    pub method: String,
    pub mesh_type: String,
    pub n_elements: usize,
    pub h: f64,
    /// Maximum degree (the only degree for uniform runs).
    pub p: usize,
    pub n_dofs: usize,
    pub nnz: usize,
    pub err_l2: Option<f64>,
    pub err_cdg: Option<f64>,
    pub rate_l2: Option<f64>,
    pub rate_cdg: Option<f64>,
    pub t_assembly_s: f64,
    pub t_solve_s: Option<f64>,
    pub lambda_min: Option<f64>,
    pub cond2: Option<f64>,
    pub solver_iters: Option<usize>,
    pub solver_residual: Option<f64>,
}

impl ReportRow {
    pub fn from_case(study: &str, mesh_type: &str, mesh: &Mesh, case: &CaseResult) -> Self {
        let sol = case.solution.as_ref();
        Self {
            study: study.to_string(),
            method: case.system.method.name().to_string(),
            mesh_type: mesh_type.to_string(),
            n_elements: mesh.n_elements(),
            h: mesh.meshsize,
            p: case.degrees.max(),
            n_dofs: case.system.dofs.n_dofs(),
            nnz: case.system.matrix.nnz(),
            err_l2: case.err_l2,
            err_cdg: case.err_cdg,
            rate_l2: None,
            rate_cdg: None,
            t_assembly_s: case.system.t_assembly,
            t_solve_s: sol.map(|s| s.t_solve),
            lambda_min: case.lambda_min,
            cond2: case.cond2,
            solver_iters: sol.map(|s| s.iterations),
            solver_residual: sol.map(|s| s.residual),
        }
    }

    fn group(&self) -> (&str, &str, &str, usize) {
        (&self.study, &self.method, &self.mesh_type, self.p)
    }
}

/// Least-squares slope of `log(err)` against `log(h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub study: String,
    pub method: String,
    pub mesh_type: String,
    pub p: usize,
    pub points: usize,
    pub rate_l2: Option<f64>,
    pub rate_cdg: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StudyReport {
    pub rows: Vec<ReportRow>,
    pub fits: Vec<RateFit>,
    /// Free-form outcome lines (failures, check results).
    pub notes: Vec<String>,
}

/// `(slope, intercept, r²)` of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

/// Convergence rate from `(h, err)` pairs, fitted over the last `last`
/// points. `None` with fewer than two usable points.
pub fn fit_rate(pairs: &[(f64, f64)], last: usize) -> Option<f64> {
    let usable: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(h, e)| h > 0.0 && e > 0.0 && e.is_finite()).collect();
    let tail = &usable[usable.len().saturating_sub(last)..];
    let x: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    linear_fit(&x, &y).map(|f| f.0)
}

/// Points used by the fitted rates.
pub const FIT_POINTS: usize = 4;

impl StudyReport {
    /// Fills the pairwise rates of consecutive rows in each
    /// `(study, method, mesh_type, p)` group and appends the fitted rates.
    pub fn compute_rates(&mut self) {
        let mut groups: Vec<(String, String, String, usize)> = Vec::new();
        for r in &self.rows {
            let g = r.group();
            let key = (g.0.to_string(), g.1.to_string(), g.2.to_string(), g.3);
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        for (study, method, mesh_type, p) in groups {
            let idx: Vec<usize> = (0..self.rows.len())
                .filter(|&i| self.rows[i].group() == (study.as_str(), method.as_str(), mesh_type.as_str(), p))
                .collect();
            if idx.len() < 2 {
                continue;
            }
            for w in idx.windows(2) {
                let (a, b) = (&self.rows[w[0]], &self.rows[w[1]]);
                let rate = |ea: Option<f64>, eb: Option<f64>| match (ea, eb) {
                    (Some(ea), Some(eb)) if ea > 0.0 && eb > 0.0 && a.h != b.h => Some((ea / eb).ln() / (a.h / b.h).ln()),
                    _ => None,
                };
                let (r2, rc) = (rate(a.err_l2, b.err_l2), rate(a.err_cdg, b.err_cdg));
                self.rows[w[1]].rate_l2 = r2;
                self.rows[w[1]].rate_cdg = rc;
            }
            let pairs = |f: fn(&ReportRow) -> Option<f64>| -> Vec<(f64, f64)> {
                idx.iter().filter_map(|&i| f(&self.rows[i]).map(|e| (self.rows[i].h, e))).collect()
            };
            let l2 = pairs(|r| r.err_l2);
            let cdg = pairs(|r| r.err_cdg);
            let (rate_l2, rate_cdg) = (fit_rate(&l2, FIT_POINTS), fit_rate(&cdg, FIT_POINTS));
            if rate_l2.is_some() || rate_cdg.is_some() {
                let points = idx.len().min(FIT_POINTS);
                self.fits.push(RateFit { study, method, mesh_type, p, points, rate_l2, rate_cdg });
            }
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(e.to_string()))?;
        if self.rows.is_empty() {
            w.write_record(CSV_COLUMNS).map_err(|e| HarnessError::Io(e.to_string()))?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_fits_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(e.to_string()))?;
        for f in &self.fits {
            w.serialize(f).map_err(|e| HarnessError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn fit(&self, study: &str, method: &str, mesh_type: &str, p: usize) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.study == study && f.method == method && f.mesh_type == mesh_type && f.p == p)
    }

    pub fn extend(&mut self, other: StudyReport) {
        self.rows.extend(other.rows);
        self.fits.extend(other.fits);
        self.notes.extend(other.notes);
    }
}
