//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::ManufacturedSolution;
use crate::local_ops::DiffusionTensor;
use crate::method::{FluxConfig, MethodKind, Orientation};

use super::HarnessError;

pub const KEYS: [&str; 15] = [
    "method",
    "mesh.type",
    "mesh.n",
    "mesh.file",
    "degree",
    "degree.rule",
    "gamma",
    "chi.override",
    "eta.scale",
    "sweep.dx",
    "sweep.dy",
    "orientation",
    "ms",
    "solver.tol",
    "solver.maxit",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshType {
    Cartesian,
    Triangular,
    Voronoi,
    Agglomerated,
    File,
}

impl MeshType {
    pub const FAMILIES: [MeshType; 4] = [MeshType::Cartesian, MeshType::Triangular, MeshType::Voronoi, MeshType::Agglomerated];

    pub fn name(self) -> &'static str {
        match self {
            MeshType::Cartesian => "cartesian",
            MeshType::Triangular => "triangular",
            MeshType::Voronoi => "voronoi",
            MeshType::Agglomerated => "agglomerated",
            MeshType::File => "file",
        }
    }
}

impl std::fmt::Display for MeshType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" | "cart" => Ok(MeshType::Cartesian),
            "triangular" | "tri" => Ok(MeshType::Triangular),
            "voronoi" => Ok(MeshType::Voronoi),
            "agglomerated" | "agglo" => Ok(MeshType::Agglomerated),
            "file" => Ok(MeshType::File),
            _ => Err(format!("unknown mesh type '{s}'")),
        }
    }
}

/// How element degrees are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeRule {
    /// Every element gets the configured degree.
    Uniform,
    /// `p_in` where `|x² + y² - r2| < width` at the centroid, `p_out`
    /// elsewhere.
    Annulus { r2: f64, width: f64, p_in: usize, p_out: usize },
}

impl DegreeRule {
    pub const DEFAULT_ANNULUS: DegreeRule = DegreeRule::Annulus { r2: 0.8, width: 0.15, p_in: 2, p_out: 1 };
}

impl std::fmt::Display for DegreeRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegreeRule::Uniform => f.write_str("uniform"),
            DegreeRule::Annulus { r2, width, p_in, p_out } => write!(f, "annulus:{r2},{width},{p_in},{p_out}"),
        }
    }
}

impl FromStr for DegreeRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(DegreeRule::Uniform);
        }
        let Some(rest) = s.strip_prefix("annulus") else {
            return Err(format!("unknown degree rule '{s}' (expected uniform or annulus[:r2,width,p_in,p_out])"));
        };
        let rest = rest.trim();
        if rest.is_empty() {
            return Ok(DegreeRule::DEFAULT_ANNULUS);
        }
        let parts: Vec<&str> = rest.trim_start_matches(':').split(',').map(str::trim).collect();
        let bad = || format!("malformed annulus rule '{s}'");
        if parts.len() != 4 {
            return Err(bad());
        }
        let r2: f64 = parts[0].parse().map_err(|_| bad())?;
        let width: f64 = parts[1].parse().map_err(|_| bad())?;
        let p_in: usize = parts[2].parse().map_err(|_| bad())?;
        let p_out: usize = parts[3].parse().map_err(|_| bad())?;
        if !(width > 0.0) || p_in == 0 || p_out == 0 {
            return Err(bad());
        }
        Ok(DegreeRule::Annulus { r2, width, p_in, p_out })
    }
}

/// Everything a study needs besides the study kind.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: MethodKind,
    pub mesh_type: MeshType,
    /// Element count for Voronoi/agglomerated meshes, cells per side for
    /// Cartesian/triangular ones.
    pub mesh_n: usize,
    pub mesh_file: Option<PathBuf>,
    /// One entry per polynomial degree to run.
    pub degrees: Vec<usize>,
    pub degree_rule: DegreeRule,
    pub gamma: f64,
    pub chi_override: Option<f64>,
    pub eta_scale: f64,
    pub sweep: [f64; 2],
    pub orientation: Orientation,
    pub ms: String,
    pub solver_tol: f64,
    pub solver_maxit: usize,
    /// From the command line, not the file.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Cdg,
            mesh_type: MeshType::Voronoi,
            mesh_n: 100,
            mesh_file: None,
            degrees: vec![1],
            degree_rule: DegreeRule::Uniform,
            gamma: 0.9,
            chi_override: None,
            eta_scale: 10.0,
            sweep: [1.0, 0.0],
            orientation: Orientation::Correct,
            ms: "sincos".into(),
            solver_tol: 1e-12,
            solver_maxit: 20_000,
            seed: 42,
        }
    }
}

fn parse_degrees(v: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("invalid degree list '{v}'");
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.iter().any(|&p| p == 0 || p > crate::basis::MAX_DEGREE) {
        return Err(bad());
    }
    Ok(out)
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid number '{v}'"))
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut c = Self::parse_str(&text)?;
        if let Some(f) = &c.mesh_file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    c.mesh_file = Some(dir.join(f));
                }
            }
        }
        Ok(c)
    }

    pub fn parse_str(text: &str) -> Result<Self, HarnessError> {
        let mut c = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |key: &str, msg: String| HarnessError::Config { line: line_no, key: key.to_string(), msg };
            let Some((k, v)) = line.split_once('=') else {
                return Err(err("", "expected 'key = value'".into()));
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(&key) = KEYS.iter().find(|&&x| x == k) else {
                return Err(err(k, "unknown key".into()));
            };
            if seen.contains(&key) {
                return Err(err(k, "duplicate key".into()));
            }
            seen.push(key);
            let r: Result<(), String> = (|| {
                match key {
                    "method" => c.method = v.parse().map_err(|e: crate::method::MethodError| e.to_string())?,
                    "mesh.type" => c.mesh_type = v.parse()?,
                    "mesh.n" => {
                        c.mesh_n = num(v)?;
                        if c.mesh_n == 0 {
                            return Err("mesh.n must be positive".into());
                        }
                    }
                    "mesh.file" => c.mesh_file = Some(PathBuf::from(v)),
                    "degree" => c.degrees = parse_degrees(v)?,
                    "degree.rule" => c.degree_rule = v.parse()?,
                    "gamma" => c.gamma = num(v)?,
                    "chi.override" => {
                        c.chi_override = if v.eq_ignore_ascii_case("none") { None } else { Some(num(v)?) }
                    }
                    "eta.scale" => c.eta_scale = num(v)?,
                    "sweep.dx" => c.sweep[0] = num(v)?,
                    "sweep.dy" => c.sweep[1] = num(v)?,
                    "orientation" => c.orientation = v.parse().map_err(|e: crate::method::MethodError| e.to_string())?,
                    "ms" => {
                        let ms = ManufacturedSolution::by_name(v, DiffusionTensor::identity()).map_err(|e| e.to_string())?;
                        c.ms = ms.name.to_string();
                    }
                    "solver.tol" => {
                        c.solver_tol = num(v)?;
                        if !(c.solver_tol > 0.0) {
                            return Err("solver.tol must be positive".into());
                        }
                    }
                    "solver.maxit" => c.solver_maxit = num(v)?,
                    _ => unreachable!("key list and match agree"),
                }
                Ok(())
            })();
            r.map_err(|m| err(k, m))?;
        }
        c.flux_config(c.method).validate().map_err(|e| HarnessError::Config { line: 0, key: "flux".into(), msg: e.to_string() })?;
        if c.mesh_type == MeshType::File && c.mesh_file.is_none() {
            return Err(HarnessError::Config { line: 0, key: "mesh.file".into(), msg: "mesh.type = file needs mesh.file".into() });
        }
        Ok(c)
    }

    /// Inverse of [`RunConfig::parse_str`] (the seed is not part of the file).
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let deg: Vec<String> = self.degrees.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "method = {}", self.method.name().to_ascii_lowercase());
        let _ = writeln!(s, "mesh.type = {}", self.mesh_type);
        let _ = writeln!(s, "mesh.n = {}", self.mesh_n);
        if let Some(f) = &self.mesh_file {
            let _ = writeln!(s, "mesh.file = {}", f.display());
        }
        let _ = writeln!(s, "degree = {}", deg.join(","));
        let _ = writeln!(s, "degree.rule = {}", self.degree_rule);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        if let Some(x) = self.chi_override {
            let _ = writeln!(s, "chi.override = {x:?}");
        }
        let _ = writeln!(s, "eta.scale = {:?}", self.eta_scale);
        let _ = writeln!(s, "sweep.dx = {:?}", self.sweep[0]);
        let _ = writeln!(s, "sweep.dy = {:?}", self.sweep[1]);
        let _ = writeln!(s, "orientation = {}", self.orientation);
        let _ = writeln!(s, "ms = {}", self.ms);
        let _ = writeln!(s, "solver.tol = {:?}", self.solver_tol);
        let _ = writeln!(s, "solver.maxit = {}", self.solver_maxit);
        s
    }

    pub fn flux_config(&self, method: MethodKind) -> FluxConfig {
        FluxConfig {
            method,
            sweep: self.sweep,
            gamma: self.gamma,
            chi_override: self.chi_override,
            eta_scale: self.eta_scale,
            orientation: self.orientation,
        }
    }

    pub fn solution(&self) -> ManufacturedSolution {
        ManufacturedSolution::by_name(&self.ms, DiffusionTensor::identity()).expect("validated at parse time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_defaults() {
        let c = RunConfig::parse_str("method = cdg\nmesh.type = cartesian\nmesh.n = 4\ndegree = 1\nms = sincos\n").unwrap();
        assert_eq!(c.mesh_type, MeshType::Cartesian);
        assert_eq!(c.mesh_n, 4);
        assert_eq!(c.degrees, vec![1]);
        assert_eq!(c.gamma, 0.9);
    }

    #[test]
    fn rejects_unknown_key_and_method() {
        let e = RunConfig::parse_str("method = cdg\nfoo = 1\n").unwrap_err();
        assert!(matches!(e, HarnessError::Config { line: 2, ref key, .. } if key == "foo"), "{e}");
        let e = RunConfig::parse_str("method = sipg\n").unwrap_err();
        assert!(e.to_string().contains("method"), "{e}");
        assert!(RunConfig::parse_str("gamma = 1.5\n").is_err());
        assert!(RunConfig::parse_str("mesh.type = file\n").is_err());
        assert!(RunConfig::parse_str("degree = 1\ndegree = 2\n").is_err());
    }

    #[test]
    fn degree_lists_and_rules() {
        let c = RunConfig::parse_str("degree = 1..4\ndegree.rule = annulus\n").unwrap();
        assert_eq!(c.degrees, vec![1, 2, 3, 4]);
        assert_eq!(c.degree_rule, DegreeRule::DEFAULT_ANNULUS);
        let c = RunConfig::parse_str("degree = 2, 5\ndegree.rule = annulus:0.5,0.1,3,1\n").unwrap();
        assert_eq!(c.degrees, vec![2, 5]);
        assert_eq!(c.degree_rule, DegreeRule::Annulus { r2: 0.5, width: 0.1, p_in: 3, p_out: 1 });
        assert!(RunConfig::parse_str("degree = 0\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.method = MethodKind::LdgW;
        c.chi_override = Some(0.1);
        c.sweep = [0.6, 0.8];
        c.degrees = vec![1, 3];
        c.degree_rule = DegreeRule::DEFAULT_ANNULUS;
        c.ms = "tanh-front".into();
        c.mesh_type = MeshType::File;
        c.mesh_file = Some("m.pmesh.json".into());
        assert_eq!(RunConfig::parse_str(&c.to_config_string()).unwrap(), c);
    }
}
