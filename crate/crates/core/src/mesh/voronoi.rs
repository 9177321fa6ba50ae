//! Lloyd-relaxed Voronoi meshes of the unit square.
//!
//! Each cell is the unit square clipped by the bisector half-planes of nearby
//! seeds. Seeds are bucketed in a uniform grid and visited ring by ring around
//! the owning seed; clipping stops once every unvisited seed is farther than
//! twice the current cell radius, which makes the cell exact.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mesh, MeshError};
use crate::geometry::{self, Point2};

const LLOYD_TOL: f64 = 1e-8;
const MERGE_TOL: f64 = 1e-10;

/// `n_seeds` uniform random seeds, relaxed by at most `lloyd_iters` Lloyd
/// steps (stopping early once no seed moves more than 1e-8).
pub fn build_voronoi(n_seeds: usize, lloyd_iters: usize, rng_seed: u64) -> Result<Mesh, MeshError> {
    if n_seeds == 0 {
        return Err(MeshError::Internal("need at least one seed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seeds: Vec<Point2> = (0..n_seeds)
        .map(|_| Point2::new(rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    build_voronoi_from_seeds(seeds, lloyd_iters)
}

pub fn build_voronoi_from_seeds(seeds: Vec<Point2>, lloyd_iters: usize) -> Result<Mesh, MeshError> {
    let seeds = lloyd_relax(seeds, lloyd_iters)?;
    let cells = voronoi_cells(&seeds)?;
    mesh_from_cells(&cells)
}

/// Moves every seed to the centroid of its cell until the largest displacement
/// drops below 1e-8 or `max_iters` steps were taken.
pub fn lloyd_relax(mut seeds: Vec<Point2>, max_iters: usize) -> Result<Vec<Point2>, MeshError> {
    for _ in 0..max_iters {
        let cells = voronoi_cells(&seeds)?;
        let mut moved: f64 = 0.0;
        for (s, cell) in seeds.iter_mut().zip(&cells) {
            let c = geometry::centroid(cell);
            moved = moved.max(c.dist(*s));
            *s = c;
        }
        if moved < LLOYD_TOL {
            break;
        }
    }
    Ok(seeds)
}

struct SeedGrid {
    nb: usize,
    bins: Vec<Vec<usize>>,
}

impl SeedGrid {
    fn new(seeds: &[Point2]) -> Self {
        let nb = ((seeds.len() as f64).sqrt().ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nb * nb];
        for (i, s) in seeds.iter().enumerate() {
            let (bx, by) = Self::bin_of(nb, *s);
            bins[by * nb + bx].push(i);
        }
        Self { nb, bins }
    }

    fn bin_of(nb: usize, p: Point2) -> (usize, usize) {
        let f = |t: f64| ((t * nb as f64).floor().max(0.0) as usize).min(nb - 1);
        (f(p.x), f(p.y))
    }

    fn bin_size(&self) -> f64 {
        1.0 / self.nb as f64
    }
}

/// Voronoi cells clipped to the unit square, as counter-clockwise point loops.
pub fn voronoi_cells(seeds: &[Point2]) -> Result<Vec<Vec<Point2>>, MeshError> {
    if seeds.iter().any(|s| !(s.is_finite() && (0.0..=1.0).contains(&s.x) && (0.0..=1.0).contains(&s.y))) {
        return Err(MeshError::Internal("seeds must lie in the unit square".into()));
    }
    let grid = SeedGrid::new(seeds);
    let nb = grid.nb as isize;
    seeds
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut poly = vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ];
            let (bx, by) = SeedGrid::bin_of(grid.nb, p);
            let (bx, by) = (bx as isize, by as isize);
            for ring in 0..=nb {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()) != ring {
                            continue;
                        }
                        let (x, y) = (bx + dx, by + dy);
                        if x < 0 || y < 0 || x >= nb || y >= nb {
                            continue;
                        }
                        for &j in &grid.bins[(y * nb + x) as usize] {
                            if j == i {
                                continue;
                            }
                            let q = seeds[j];
                            if q.dist(p) < 1e-12 {
                                return Err(MeshError::DegenerateSeeds);
                            }
                            poly = clip_bisector(&poly, p, q);
                        }
                    }
                }
                let radius = poly.iter().map(|v| v.dist(p)).fold(0.0, f64::max);
                if 2.0 * radius <= ring as f64 * grid.bin_size() {
                    break;
                }
            }
            if poly.len() < 3 {
                return Err(MeshError::DegenerateSeeds);
            }
            Ok(poly)
        })
        .collect()
}

/// Keeps the part of the convex polygon closer to `p` than to `q`.
fn clip_bisector(poly: &[Point2], p: Point2, q: Point2) -> Vec<Point2> {
    let d = q - p;
    let m = p.lerp(q, 0.5);
    let side = |v: Point2| (v - m).dot(d);
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let (sa, sb) = (side(a), side(b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            out.push(a.lerp(b, sa / (sa - sb)));
        }
    }
    out
}

/// Merges coincident cell vertices across cells and builds the mesh.
fn mesh_from_cells(cells: &[Vec<Point2>]) -> Result<Mesh, MeshError> {
    let inv = 1.0 / (10.0 * MERGE_TOL);
    let key = |p: Point2| ((p.x * inv).round() as i64, (p.y * inv).round() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut vertices: Vec<Point2> = Vec::new();
    let snap = |t: f64| {
        if t.abs() < 1e-14 {
            0.0
        } else if (t - 1.0).abs() < 1e-14 {
            1.0
        } else {
            t
        }
    };
    let mut loops = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut lp: Vec<usize> = Vec::with_capacity(cell.len());
        for &raw in cell {
            let p = Point2::new(snap(raw.x), snap(raw.y));
            let (kx, ky) = key(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(ids) = buckets.get(&(kx + dx, ky + dy)) {
                        for &v in ids {
                            if vertices[v].dist(p) <= MERGE_TOL {
                                found = Some(v);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let v = found.unwrap_or_else(|| {
                vertices.push(p);
                buckets.entry((kx, ky)).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
            if lp.last() != Some(&v) {
                lp.push(v);
            }
        }
        while lp.len() > 1 && lp.first() == lp.last() {
            lp.pop();
        }
        if lp.len() < 3 {
            return Err(MeshError::DegenerateSeeds);
        }
        loops.push(lp);
    }
    Mesh::from_polygons(vertices, loops, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cartesian;

    #[test]
    fn single_seed_is_unit_square() {
        let m = build_voronoi(1, 0, 3).unwrap();
        assert_eq!(m.n_elements(), 1);
        assert!((m.elements[0].area - 1.0).abs() < 1e-15);
        assert_eq!(m.facets.len(), 4);
    }

    #[test]
    fn symmetric_seeds_reproduce_cartesian_grid() {
        let seeds = vec![
            Point2::new(0.25, 0.25),
            Point2::new(0.75, 0.25),
            Point2::new(0.25, 0.75),
            Point2::new(0.75, 0.75),
        ];
        let m = build_voronoi_from_seeds(seeds, 0).unwrap();
        let c = build_cartesian(2, 2).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.n_interior_facets(), c.n_interior_facets());
        assert_eq!(m.facets.len(), c.facets.len());
        for (a, b) in m.elements.iter().zip(&c.elements) {
            assert!((a.area - 0.25).abs() < 1e-15);
            assert!(a.centroid.dist(b.centroid) < 1e-15);
            assert_eq!(a.facets.len(), 4);
        }
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let seeds = vec![Point2::new(0.3, 0.3), Point2::new(0.3, 0.3)];
        assert!(matches!(
            build_voronoi_from_seeds(seeds, 0),
            Err(MeshError::DegenerateSeeds)
        ));
    }

    #[test]
    fn hundred_cells_partition_the_square() {
        let m = build_voronoi(100, 100, 42).unwrap();
        assert_eq!(m.n_elements(), 100);
        assert!((m.total_area() - 1.0).abs() < 1e-10);
        for e in &m.elements {
            let pts = m.element_points(e.id);
            let n = pts.len();
            for i in 0..n {
                let turn = (pts[(i + 1) % n] - pts[i]).cross(pts[(i + 2) % n] - pts[(i + 1) % n]);
                assert!(turn >= -1e-14, "cell {} not convex", e.id);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = build_voronoi(50, 10, 7).unwrap();
        let b = build_voronoi(50, 10, 7).unwrap();
        assert_eq!(a, b);
    }
}
