//! Per-facet method parameters: average direction, out-sets, lifting weights
//! and the LDG penalty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::DegreeVector;
use crate::geometry::Point2;
use crate::mesh::{FacetKind, Mesh};

#[derive(Debug, Error, PartialEq)]
pub enum MethodError {
    #[error("unknown method `{0}` (expected cdg, br2, ldg_w or ldg_f)")]
    UnknownMethod(String),
    #[error("unknown orientation `{0}` (expected correct or inverted)")]
    UnknownOrientation(String),
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("chi must be positive, got {0}")]
    BadChi(f64),
    #[error("eta scale must be positive, got {0}")]
    BadEta(f64),
    #[error("sweep direction must be a nonzero finite vector")]
    BadSweep,
    #[error("out-sets are undefined for two-sided averages (alpha = 1/2)")]
    TwoSided,
    #[error("degree vector has {0} entries but the mesh has {1} elements")]
    DegreeMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    Cdg,
    Br2,
    LdgW,
    LdgF,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [MethodKind::Cdg, MethodKind::Br2, MethodKind::LdgW, MethodKind::LdgF];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Cdg => "CDG",
            MethodKind::Br2 => "BR2",
            MethodKind::LdgW => "LDG_w",
            MethodKind::LdgF => "LDG_f",
        }
    }

    /// Whether averages take a one-sided trace (alpha in {0, 1}).
    pub fn one_sided(self) -> bool {
        matches!(self, MethodKind::Cdg | MethodKind::LdgW)
    }

    pub fn is_ldg(self) -> bool {
        matches!(self, MethodKind::LdgW | MethodKind::LdgF)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = MethodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cdg" => Ok(MethodKind::Cdg),
            "br2" => Ok(MethodKind::Br2),
            "ldg_w" | "ldgw" => Ok(MethodKind::LdgW),
            "ldg_f" | "ldgf" => Ok(MethodKind::LdgF),
            _ => Err(MethodError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Average taken from the higher-degree element.
    Correct,
    /// Average taken from the lower-degree element.
    Inverted,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Correct => "correct",
            Orientation::Inverted => "inverted",
        })
    }
}

impl FromStr for Orientation {
    type Err = MethodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "correct" => Ok(Orientation::Correct),
            "inverted" => Ok(Orientation::Inverted),
            _ => Err(MethodError::UnknownOrientation(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxConfig {
    pub method: MethodKind,
    pub sweep: [f64; 2],
    pub gamma: f64,
    pub chi_override: Option<f64>,
    pub eta_scale: f64,
    pub orientation: Orientation,
}

impl Default for FluxConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Cdg,
            sweep: [1.0, 0.0],
            gamma: 0.9,
            chi_override: None,
            eta_scale: 10.0,
            orientation: Orientation::Correct,
        }
    }
}

impl FluxConfig {
    pub fn new(method: MethodKind) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MethodError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(MethodError::BadGamma(self.gamma));
        }
        if let Some(c) = self.chi_override {
            if !(c > 0.0 && c.is_finite()) {
                return Err(MethodError::BadChi(c));
            }
        }
        if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
            return Err(MethodError::BadEta(self.eta_scale));
        }
        let [dx, dy] = self.sweep;
        if !(dx.is_finite() && dy.is_finite()) || dx == 0.0 && dy == 0.0 {
            return Err(MethodError::BadSweep);
        }
        Ok(())
    }
}

/// One-sided lifting supports.
#[derive(Debug, Clone, PartialEq)]
pub struct OutSets {
    /// `F_K^out`: interior facets whose average takes the trace of `K`, plus
    /// the Dirichlet facets of `K`, in the element's facet order.
    pub facets: Vec<Vec<usize>>,
    /// `N_K^out`: sorted elements touching a facet of `F_K^out` (contains `K`
    /// whenever `F_K^out` is nonempty).
    pub neighbors: Vec<Vec<usize>>,
    /// `K_F` per facet; `None` for Neumann facets.
    pub owner: Vec<Option<usize>>,
    /// `nu_F^out = |F_{K_F}^out|` per facet; 0 for Neumann facets.
    pub nu: Vec<usize>,
}

/// Per-facet alpha. Boundary facets get 1.
pub fn assign_alpha(mesh: &Mesh, degrees: &DegreeVector, config: &FluxConfig) -> Vec<f64> {
    let d = Point2::new(config.sweep[0], config.sweep[1]);
    mesh.facets
        .iter()
        .map(|f| {
            let (k1, Some(k2)) = f.adjacent else {
                return 1.0;
            };
            if !config.method.one_sided() {
                return 0.5;
            }
            let (p1, p2) = (degrees.get(k1), degrees.get(k2));
            if p1 != p2 {
                let from_k1 = match config.orientation {
                    Orientation::Correct => p1 > p2,
                    Orientation::Inverted => p1 < p2,
                };
                return if from_k1 { 1.0 } else { 0.0 };
            }
            if f.normal.dot(d) >= 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn compute_out_sets(mesh: &Mesh, alpha: &[f64]) -> Result<OutSets, MethodError> {
    let nf = mesh.facets.len();
    let mut owner = vec![None; nf];
    for (f, facet) in mesh.facets.iter().enumerate() {
        owner[f] = match (facet.kind, facet.adjacent) {
            (FacetKind::Interior, (k1, Some(k2))) => {
                if alpha[f] == 1.0 {
                    Some(k1)
                } else if alpha[f] == 0.0 {
                    Some(k2)
                } else {
                    return Err(MethodError::TwoSided);
                }
            }
            (FacetKind::Dirichlet, (k, _)) => Some(k),
            _ => None,
        };
    }
    let mut facets = vec![Vec::new(); mesh.n_elements()];
    for (k, e) in mesh.elements.iter().enumerate() {
        facets[k] = e.facets.iter().copied().filter(|&f| owner[f] == Some(k)).collect();
    }
    let neighbors = facets
        .iter()
        .enumerate()
        .map(|(k, fs)| {
            let mut n: Vec<usize> = fs
                .iter()
                .flat_map(|&f| {
                    let (a, b) = mesh.facets[f].adjacent;
                    std::iter::once(a).chain(b)
                })
                .collect();
            if n.is_empty() {
                return n;
            }
            n.push(k);
            n.sort_unstable();
            n.dedup();
            n
        })
        .collect();
    let nu = owner.iter().map(|o| o.map_or(0, |k| facets[k].len())).collect();
    Ok(OutSets { facets, neighbors, owner, nu })
}

/// Number of interior and Dirichlet facets of each element.
pub fn active_facet_counts(mesh: &Mesh) -> Vec<usize> {
    mesh.elements
        .iter()
        .map(|e| e.facets.iter().filter(|&&f| mesh.facets[f].kind != FacetKind::Neumann).count())
        .collect()
}

/// Lifting weights per facet (0 on Neumann facets). One-sided methods use
/// `nu_F^out / gamma`; two-sided ones use the larger active facet count of
/// the adjacent elements over `gamma`.
pub fn assign_chi(mesh: &Mesh, out_sets: Option<&OutSets>, config: &FluxConfig) -> Result<Vec<f64>, MethodError> {
    config.validate()?;
    let counts = active_facet_counts(mesh);
    mesh.facets
        .iter()
        .enumerate()
        .map(|(f, facet)| {
            if facet.kind == FacetKind::Neumann {
                return Ok(0.0);
            }
            if let Some(c) = config.chi_override {
                return Ok(c);
            }
            let nu = match out_sets {
                Some(o) => o.nu[f],
                None => {
                    let (a, b) = facet.adjacent;
                    counts[a].max(b.map_or(0, |b| counts[b]))
                }
            };
            let chi = nu as f64 / config.gamma;
            if chi > 0.0 {
                Ok(chi)
            } else {
                Err(MethodError::BadChi(chi))
            }
        })
        .collect()
}

/// LDG penalty `C_eta * kappa_norm * max(p)^2 / min(h_K)` (0 on Neumann facets).
pub fn assign_eta(mesh: &Mesh, degrees: &DegreeVector, kappa_norm: f64, config: &FluxConfig) -> Vec<f64> {
    mesh.facets
        .iter()
        .map(|facet| {
            if facet.kind == FacetKind::Neumann {
                return 0.0;
            }
            let (a, b) = facet.adjacent;
            let mut p = degrees.get(a);
            let mut h = mesh.elements[a].diameter;
            if let Some(b) = b {
                p = p.max(degrees.get(b));
                h = h.min(mesh.elements[b].diameter);
            }
            config.eta_scale * kappa_norm * (p * p) as f64 / h
        })
        .collect()
}

/// Everything the assemblers need to know about the facets.
#[derive(Debug, Clone)]
pub struct FacetParams {
    pub method: MethodKind,
    pub alpha: Vec<f64>,
    /// Present for one-sided methods.
    pub out_sets: Option<OutSets>,
    pub chi: Vec<f64>,
    /// Present for LDG methods.
    pub eta: Option<Vec<f64>>,
}

impl FacetParams {
    pub fn new(mesh: &Mesh, degrees: &DegreeVector, kappa_norm: f64, config: &FluxConfig) -> Result<Self, MethodError> {
        config.validate()?;
        if degrees.len() != mesh.n_elements() {
            return Err(MethodError::DegreeMismatch(degrees.len(), mesh.n_elements()));
        }
        let alpha = assign_alpha(mesh, degrees, config);
        let out_sets = if config.method.one_sided() {
            Some(compute_out_sets(mesh, &alpha)?)
        } else {
            None
        };
        let chi = assign_chi(mesh, out_sets.as_ref(), config)?;
        let eta = config.method.is_ldg().then(|| assign_eta(mesh, degrees, kappa_norm, config));
        Ok(Self { method: config.method, alpha, out_sets, chi, eta })
    }

    /// Facets visited for element `k` by the lifting loop: the out-set for
    /// one-sided methods, all interior and Dirichlet facets otherwise.
    pub fn loop_facets<'a>(&'a self, mesh: &'a Mesh, k: usize) -> Vec<usize> {
        match &self.out_sets {
            Some(o) => o.facets[k].clone(),
            None => mesh.elements[k]
                .facets
                .iter()
                .copied()
                .filter(|&f| mesh.facets[f].kind != FacetKind::Neumann)
                .collect(),
        }
    }

    /// Weight of the average on element `k`'s side of interior facet `f`:
    /// `alpha` for `K1`, `1 - alpha` for `K2`.
    pub fn side_weight(&self, mesh: &Mesh, f: usize, k: usize) -> f64 {
        let facet = &mesh.facets[f];
        match facet.adjacent {
            (_, None) => 1.0,
            (a, Some(_)) if a == k => self.alpha[f],
            _ => 1.0 - self.alpha[f],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_voronoi};

    fn facet_between(m: &Mesh, a: usize, b: usize) -> usize {
        m.facets
            .iter()
            .position(|f| f.adjacent == (a.min(b), Some(a.max(b))))
            .unwrap()
    }

    #[test]
    fn sweep_rule_and_ties() {
        let m = build_cartesian(2, 1).unwrap();
        let d = DegreeVector::uniform(2, 1).unwrap();
        let a = assign_alpha(&m, &d, &FluxConfig::default());
        let f = facet_between(&m, 0, 1);
        assert_eq!(a[f], 1.0);
        let m = build_cartesian(1, 2).unwrap();
        let a = assign_alpha(&m, &d, &FluxConfig::default());
        assert_eq!(a[facet_between(&m, 0, 1)], 1.0); // n = (0,1), beta = 0
    }

    #[test]
    fn higher_degree_side_wins() {
        let m = build_cartesian(2, 1).unwrap();
        let d = DegreeVector::new(vec![1, 2]).unwrap();
        let f = facet_between(&m, 0, 1);
        let a = assign_alpha(&m, &d, &FluxConfig::default());
        let o = compute_out_sets(&m, &a).unwrap();
        assert_eq!(o.owner[f], Some(1));
        let inv = FluxConfig { orientation: Orientation::Inverted, ..FluxConfig::default() };
        let o = compute_out_sets(&m, &assign_alpha(&m, &d, &inv)).unwrap();
        assert_eq!(o.owner[f], Some(0));
    }

    #[test]
    fn cartesian_three_by_three_out_sets() {
        let m = build_cartesian(3, 3).unwrap();
        let d = DegreeVector::uniform(9, 1).unwrap();
        let o = compute_out_sets(&m, &assign_alpha(&m, &d, &FluxConfig::default())).unwrap();
        let mut center = o.facets[4].clone();
        center.sort_unstable();
        let mut expect = vec![facet_between(&m, 4, 5), facet_between(&m, 4, 7)];
        expect.sort_unstable();
        assert_eq!(center, expect);
        assert!(center.iter().all(|&f| o.nu[f] == 2));
        assert_eq!(o.neighbors[4], vec![4, 5, 7]);

        assert_eq!(o.facets[0].len(), 4);
        assert!(o.facets[0].iter().all(|&f| o.nu[f] == 4));
        let total: usize = o.facets.iter().map(Vec::len).sum();
        assert_eq!(total, m.facets.len());
    }

    #[test]
    fn chi_and_eta_values() {
        let m = build_cartesian(3, 3).unwrap();
        let d = DegreeVector::uniform(9, 2).unwrap();
        let cfg = FluxConfig::default();
        let p = FacetParams::new(&m, &d, 1.0, &cfg).unwrap();
        let f = facet_between(&m, 4, 5);
        assert!((p.chi[f] - 2.0 / 0.9).abs() < 1e-15);
        let over = FluxConfig { chi_override: Some(1.0), ..cfg.clone() };
        assert!(assign_chi(&m, p.out_sets.as_ref(), &over).unwrap().iter().all(|&c| c == 1.0));

        let ldg = FluxConfig::new(MethodKind::LdgW);
        let eta = FacetParams::new(&m, &d, 1.0, &ldg).unwrap().eta.unwrap();
        let h = m.elements[0].diameter;
        assert!((eta[f] - 10.0 * 4.0 / h).abs() < 1e-12);
        let ldg2 = FluxConfig { eta_scale: 20.0, ..ldg };
        let eta2 = assign_eta(&m, &d, 1.0, &ldg2);
        assert!((eta2[f] - 2.0 * eta[f]).abs() < 1e-12);
    }

    #[test]
    fn eta_formula_example() {
        // kappa = I, p = 2, h = 0.1, C = 10 -> 400
        let cfg = FluxConfig::new(MethodKind::LdgF);
        assert!((cfg.eta_scale * 1.0 * 4.0 / 0.1 - 400.0).abs() < 1e-12);
    }

    #[test]
    fn br2_has_no_out_sets_and_uses_facet_counts() {
        let m = build_cartesian(3, 3).unwrap();
        let d = DegreeVector::uniform(9, 1).unwrap();
        let alpha = assign_alpha(&m, &d, &FluxConfig::new(MethodKind::Br2));
        assert_eq!(compute_out_sets(&m, &alpha), Err(MethodError::TwoSided));
        let p = FacetParams::new(&m, &d, 1.0, &FluxConfig::new(MethodKind::Br2)).unwrap();
        assert!(p.chi.iter().all(|&c| (c - 4.0 / 0.9).abs() < 1e-15));
    }

    #[test]
    fn flipping_sweep_swaps_owners() {
        let m = build_voronoi(40, 10, 3).unwrap();
        let d = DegreeVector::uniform(40, 1).unwrap();
        let a = compute_out_sets(&m, &assign_alpha(&m, &d, &FluxConfig::default())).unwrap();
        let cfg = FluxConfig { sweep: [-1.0, 0.0], ..FluxConfig::default() };
        let b = compute_out_sets(&m, &assign_alpha(&m, &d, &cfg)).unwrap();
        for (f, facet) in m.facets.iter().enumerate() {
            if facet.is_interior() && facet.normal.x != 0.0 {
                assert_ne!(a.owner[f], b.owner[f]);
            }
        }
    }

    #[test]
    fn config_validation_and_parsing() {
        assert!(FluxConfig { gamma: 1.0, ..FluxConfig::default() }.validate().is_err());
        assert!(FluxConfig { chi_override: Some(-1.0), ..FluxConfig::default() }.validate().is_err());
        assert_eq!("LDG_f".parse::<MethodKind>(), Ok(MethodKind::LdgF));
        assert!("sip".parse::<MethodKind>().is_err());
        assert_eq!("Inverted".parse::<Orientation>(), Ok(Orientation::Inverted));
    }
}
