//! Structured meshes of the unit square.

use super::{Mesh, MeshError};
use crate::geometry::Point2;

fn grid_vertices(nx: usize, ny: usize) -> Vec<Point2> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point2::new(i as f64 / nx as f64, j as f64 / ny as f64));
        }
    }
    v
}

/// `nx * ny` axis-aligned rectangles on `(0,1)^2`, numbered row by row.
pub fn build_cartesian(nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::Internal("grid dimensions must be positive".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::from_polygons(grid_vertices(nx, ny), cells, &[])
}

/// Cartesian cells split along the SW-NE diagonal.
pub fn build_triangular(nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::Internal("grid dimensions must be positive".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (sw, se, ne, nw) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push(vec![sw, se, ne]);
            cells.push(vec![sw, ne, nw]);
        }
    }
    Mesh::from_polygons(grid_vertices(nx, ny), cells, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FacetKind;

    #[test]
    fn single_square() {
        let m = build_cartesian(1, 1).unwrap();
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.facets.len(), 4);
        assert!(m.facets.iter().all(|f| f.kind == FacetKind::Dirichlet));
        assert!((m.meshsize - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.stats().max_facets_per_element, 4);
    }

    #[test]
    fn cartesian_counts() {
        let m = build_cartesian(2, 2).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.n_interior_facets(), 4);
        assert_eq!(m.facets.len() - m.n_interior_facets(), 8);
        for (nx, ny) in [(3, 3), (4, 2), (5, 7)] {
            let m = build_cartesian(nx, ny).unwrap();
            assert_eq!(m.n_interior_facets(), 2 * nx * ny - nx - ny);
        }
        let s = build_cartesian(3, 3).unwrap().stats();
        assert!((s.h - 2f64.sqrt() / 3.0).abs() < 1e-15);
        assert_eq!((s.n_elements, s.n_interior_facets, s.max_facets_per_element), (9, 12, 4));
    }

    #[test]
    fn triangular_counts() {
        assert_eq!(build_triangular(1, 1).unwrap().n_interior_facets(), 1);
        let m = build_triangular(2, 2).unwrap();
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_interior_facets(), 8);
        for (nx, ny) in [(3, 5), (6, 2)] {
            assert_eq!(build_triangular(nx, ny).unwrap().n_elements(), 2 * nx * ny);
        }
    }
}
