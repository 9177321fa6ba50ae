//! Polygonal meshes of planar domains.
//!
//! A [`Mesh`] is built from a vertex list and counter-clockwise vertex loops
//! (one per element). Facets are maximal straight runs of the element boundary
//! that are shared with a single neighbor (or lie on the domain boundary with a
//! single boundary kind), so agglomerated elements whose common boundary bends
//! get one facet per straight piece.

mod agglomerate;
mod generators;
mod io;
mod voronoi;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Point2};

pub use agglomerate::agglomerate;
pub use generators::{build_cartesian, build_triangular};
pub use io::{load_mesh, mesh_from_json_str, mesh_to_json_string, save_mesh, MeshFile};
pub use voronoi::{build_voronoi, build_voronoi_from_seeds, lloyd_relax, voronoi_cells};

/// Angular tolerance used to decide whether consecutive boundary edges are collinear.
pub const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell}: {reason}")]
    InvalidCell { cell: usize, reason: String },
    #[error("edge ({0}, {1}) is shared by more than two cells or traversed twice in the same direction")]
    NonManifoldEdge(usize, usize),
    #[error("degenerate seed configuration")]
    DegenerateSeeds,
    #[error("Γ_D must have positive measure")]
    NoDirichletBoundary,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("internal mesh error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// Axis-aligned (or general) straight boundary segment used to tag Neumann facets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    /// True when `p` lies on the segment up to `tol`.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let d = self.b - self.a;
        let len = d.norm();
        if len == 0.0 {
            return p.dist(self.a) <= tol;
        }
        let off = (p - self.a).cross(d).abs() / len;
        let t = (p - self.a).dot(d) / (len * len);
        off <= tol && t >= -tol / len && t <= 1.0 + tol / len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    /// Counter-clockwise vertex loop.
    pub vertices: Vec<usize>,
    pub diameter: f64,
    pub area: f64,
    pub centroid: Point2,
    /// Facets in boundary-loop order.
    pub facets: Vec<usize>,
    /// Axis-aligned bounding box `[xmin, xmax, ymin, ymax]`.
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub id: usize,
    /// Start and end vertex, in the counter-clockwise order of the first adjacent element.
    pub vertices: [usize; 2],
    pub endpoints: [Point2; 2],
    pub kind: FacetKind,
    /// Unit normal; outward for `adjacent.0`.
    pub normal: Point2,
    /// `(K1, Some(K2))` for interior facets with `K1 < K2`, `(K, None)` on the boundary.
    pub adjacent: (usize, Option<usize>),
    pub length: f64,
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.kind == FacetKind::Interior
    }

    /// Element on the other side of `k`, if any.
    pub fn other(&self, k: usize) -> Option<usize> {
        match self.adjacent {
            (a, Some(b)) if a == k => Some(b),
            (a, Some(b)) if b == k => Some(a),
            _ => None,
        }
    }

    pub fn midpoint(&self) -> Point2 {
        self.endpoints[0].lerp(self.endpoints[1], 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    /// `h = max h_K`.
    pub meshsize: f64,
    /// Sorted neighbor lists.
    pub neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub h: f64,
    pub n_elements: usize,
    pub n_interior_facets: usize,
    pub n_boundary_facets: usize,
    pub min_facets_per_element: usize,
    pub mean_facets_per_element: f64,
    pub max_facets_per_element: usize,
}

/// Per-edge classification before grouping into facets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeSide {
    Neighbor(usize),
    Boundary(FacetKind),
}

impl Mesh {
    /// Builds a mesh from counter-clockwise vertex loops. Boundary facets lying
    /// inside one of `neumann` are tagged Neumann, every other boundary facet Dirichlet.
    pub fn from_polygons(
        vertices: Vec<Point2>,
        cells: Vec<Vec<usize>>,
        neumann: &[Segment],
    ) -> Result<Mesh, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeshError::Internal(format!("vertex {i} is not finite")));
            }
        }
        for (c, cell) in cells.iter().enumerate() {
            validate_cell(&vertices, c, cell)?;
        }

        // directed edge (a, b) -> (cell, local edge index)
        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            let n = cell.len();
            for i in 0..n {
                let key = (cell[i], cell[(i + 1) % n]);
                if directed.insert(key, (c, i)).is_some() {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
            }
        }

        let bnd_tol = 1e-12;
        let sides: Vec<Vec<EdgeSide>> = cells
            .iter()
            .map(|cell| {
                let n = cell.len();
                (0..n)
                    .map(|i| {
                        let (a, b) = (cell[i], cell[(i + 1) % n]);
                        match directed.get(&(b, a)) {
                            Some(&(other, _)) => EdgeSide::Neighbor(other),
                            None => {
                                let (pa, pb) = (vertices[a], vertices[b]);
                                let is_neumann = neumann
                                    .iter()
                                    .any(|s| s.contains(pa, bnd_tol) && s.contains(pb, bnd_tol));
                                EdgeSide::Boundary(if is_neumann {
                                    FacetKind::Neumann
                                } else {
                                    FacetKind::Dirichlet
                                })
                            }
                        }
                    })
                    .collect()
            })
            .collect();

        // group consecutive edges into facets: (start local edge, run length)
        let runs: Vec<Vec<(usize, usize)>> = cells
            .iter()
            .zip(&sides)
            .map(|(cell, side)| edge_runs(&vertices, cell, side))
            .collect();

        let mut facets: Vec<Facet> = Vec::new();
        let mut elem_facets: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
        // first directed edge of a run -> facet id, used to match from the other side
        let mut facet_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            let n = cell.len();
            for &(start, len) in &runs[c] {
                let va = cell[start];
                let vb = cell[(start + len) % n];
                let side = sides[c][start];
                let fid = match side {
                    EdgeSide::Neighbor(other) if other < c => {
                        // created by the neighbor; its run covers the reversed edges
                        let last = (start + len - 1) % n;
                        let key = (cell[(last + 1) % n], cell[last]);
                        *facet_of_edge.get(&key).ok_or_else(|| {
                            MeshError::Internal(format!(
                                "facet between cells {other} and {c} is split inconsistently"
                            ))
                        })?
                    }
                    _ => {
                        let (pa, pb) = (vertices[va], vertices[vb]);
                        let d = pb - pa;
                        let length = d.norm();
                        let normal = Point2::new(d.y / length, -d.x / length);
                        let (kind, adjacent) = match side {
                            EdgeSide::Neighbor(other) => (FacetKind::Interior, (c, Some(other))),
                            EdgeSide::Boundary(k) => (k, (c, None)),
                        };
                        let id = facets.len();
                        facets.push(Facet {
                            id,
                            vertices: [va, vb],
                            endpoints: [pa, pb],
                            kind,
                            normal,
                            adjacent,
                            length,
                        });
                        facet_of_edge.insert((cell[start], cell[(start + 1) % n]), id);
                        id
                    }
                };
                elem_facets[c].push(fid);
            }
        }

        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
        for f in &facets {
            if let (a, Some(b)) = f.adjacent {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }

        let elements: Vec<Element> = cells
            .into_iter()
            .zip(elem_facets)
            .enumerate()
            .map(|(id, (cell, facets))| {
                let pts: Vec<Point2> = cell.iter().map(|&v| vertices[v]).collect();
                let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for p in &pts {
                    bbox[0] = bbox[0].min(p.x);
                    bbox[1] = bbox[1].max(p.x);
                    bbox[2] = bbox[2].min(p.y);
                    bbox[3] = bbox[3].max(p.y);
                }
                Element {
                    id,
                    diameter: geometry::diameter(&pts),
                    area: geometry::signed_area(&pts),
                    centroid: geometry::centroid(&pts),
                    vertices: cell,
                    facets,
                    bbox,
                }
            })
            .collect();

        let meshsize = elements.iter().map(|e| e.diameter).fold(0.0, f64::max);
        Ok(Mesh {
            vertices,
            elements,
            facets,
            meshsize,
            neighbors,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Outward unit normal of element `k` on facet `f`.
    pub fn outward_normal(&self, f: usize, k: usize) -> Point2 {
        let facet = &self.facets[f];
        if facet.adjacent.0 == k {
            facet.normal
        } else {
            -facet.normal
        }
    }

    pub fn element_points(&self, k: usize) -> Vec<Point2> {
        self.elements[k]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn n_interior_facets(&self) -> usize {
        self.facets.iter().filter(|f| f.is_interior()).count()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Retags boundary facets: those fully inside a Neumann segment become
    /// Neumann, all others Dirichlet.
    pub fn classify_boundary(&self, neumann: &[Segment]) -> Result<Mesh, MeshError> {
        let mut mesh = self.clone();
        let tol = 1e-12;
        for f in mesh.facets.iter_mut().filter(|f| !f.is_interior()) {
            let inside = neumann
                .iter()
                .any(|s| s.contains(f.endpoints[0], tol) && s.contains(f.endpoints[1], tol));
            f.kind = if inside {
                FacetKind::Neumann
            } else {
                FacetKind::Dirichlet
            };
        }
        let dirichlet_len: f64 = mesh
            .facets
            .iter()
            .filter(|f| f.kind == FacetKind::Dirichlet)
            .map(|f| f.length)
            .sum();
        if dirichlet_len <= 0.0 {
            return Err(MeshError::NoDirichletBoundary);
        }
        Ok(mesh)
    }

    pub fn stats(&self) -> MeshStats {
        let counts: Vec<usize> = self.elements.iter().map(|e| e.facets.len()).collect();
        let n_int = self.n_interior_facets();
        MeshStats {
            h: self.meshsize,
            n_elements: self.elements.len(),
            n_interior_facets: n_int,
            n_boundary_facets: self.facets.len() - n_int,
            min_facets_per_element: counts.iter().copied().min().unwrap_or(0),
            mean_facets_per_element: counts.iter().sum::<usize>() as f64
                / counts.len().max(1) as f64,
            max_facets_per_element: counts.iter().copied().max().unwrap_or(0),
        }
    }

    /// Boundary segments of all Neumann facets.
    pub fn neumann_segments(&self) -> Vec<Segment> {
        self.facets
            .iter()
            .filter(|f| f.kind == FacetKind::Neumann)
            .map(|f| Segment::new(f.endpoints[0], f.endpoints[1]))
            .collect()
    }
}

/// Free-function form of [`Mesh::stats`].
pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    mesh.stats()
}

/// Free-function form of [`Mesh::classify_boundary`].
pub fn classify_boundary(mesh: &Mesh, neumann: &[Segment]) -> Result<Mesh, MeshError> {
    mesh.classify_boundary(neumann)
}

fn validate_cell(vertices: &[Point2], c: usize, cell: &[usize]) -> Result<(), MeshError> {
    let invalid = |reason: String| MeshError::InvalidCell { cell: c, reason };
    if cell.len() < 3 {
        return Err(invalid(format!("{} vertices, need at least 3", cell.len())));
    }
    if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
        return Err(invalid(format!("undefined vertex {v}")));
    }
    let mut sorted = cell.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("repeated vertex in loop".into()));
    }
    let pts: Vec<Point2> = cell.iter().map(|&v| vertices[v]).collect();
    let area = geometry::signed_area(&pts);
    if area <= 0.0 {
        return Err(invalid(format!("loop is not counter-clockwise (area {area:e})")));
    }
    if !geometry::is_simple_polygon(&pts) {
        return Err(invalid("self-intersecting loop".into()));
    }
    Ok(())
}

fn collinear_continuation(a: Point2, b: Point2, c: Point2) -> bool {
    let u = b - a;
    let v = c - b;
    let (lu, lv) = (u.norm(), v.norm());
    u.cross(v).abs() <= COLLINEAR_TOL * lu * lv && u.dot(v) > 0.0
}

/// Maximal runs `(start, len)` of consecutive edges with equal side that continue straight.
fn edge_runs(vertices: &[Point2], cell: &[usize], side: &[EdgeSide]) -> Vec<(usize, usize)> {
    let n = cell.len();
    let joins = |i: usize| {
        // does edge i continue edge i-1?
        let prev = (i + n - 1) % n;
        side[prev] == side[i]
            && collinear_continuation(vertices[cell[prev]], vertices[cell[i]], vertices[cell[(i + 1) % n]])
    };
    let start0 = match (0..n).find(|&i| !joins(i)) {
        Some(s) => s,
        None => return vec![(0, n)],
    };
    let mut runs = Vec::new();
    let mut start = start0;
    let mut len = 1;
    for k in 1..n {
        let i = (start0 + k) % n;
        if joins(i) {
            len += 1;
        } else {
            runs.push((start, len));
            start = i;
            len = 1;
        }
    }
    runs.push((start, len));
    runs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l_shape_pair() -> Mesh {
        // two cells: an L-shaped hexagon and the square completing it to [0,2]^2
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 2.0),
        ];
        Mesh::from_polygons(v, vec![vec![0, 1, 2, 3, 4, 5], vec![2, 6, 4, 3]], &[]).unwrap()
    }

    #[test]
    fn bent_shared_boundary_gives_two_facets() {
        let m = l_shape_pair();
        assert_eq!(m.n_interior_facets(), 2);
        assert_eq!(m.elements[0].facets.len(), 6);
        assert_eq!(m.elements[1].facets.len(), 4);
        assert_eq!(m.neighbors[0], vec![1]);
    }

    #[test]
    fn collinear_boundary_edges_merge() {
        // unit square with a midpoint on the bottom edge: still 4 facets
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let m = Mesh::from_polygons(v, vec![vec![0, 1, 2, 3, 4]], &[]).unwrap();
        assert_eq!(m.facets.len(), 4);
        assert!((m.facets.iter().map(|f| f.length).sum::<f64>() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_clockwise_and_undefined() {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(Mesh::from_polygons(v.clone(), vec![vec![0, 2, 1]], &[]).is_err());
        assert!(Mesh::from_polygons(v, vec![vec![0, 1, 7]], &[]).is_err());
    }

    #[test]
    fn segment_containment() {
        let s = Segment::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        assert!(s.contains(Point2::new(0.3, 0.0), 1e-12));
        assert!(!s.contains(Point2::new(1.3, 0.0), 1e-12));
        assert!(!s.contains(Point2::new(0.3, 0.1), 1e-12));
    }
}
