//! `.pmesh.json` mesh files.
//!
//! ```json
//! { "vertices": [[x, y], ...],
//!   "cells": [[v0, v1, ...], ...],
//!   "neumann": [[[x0, y0], [x1, y1]], ...] }
//! ```
//! Cells are counter-clockwise vertex loops; clockwise loops are reoriented
//! with a warning. `neumann` is optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mesh, MeshError, Segment};
use crate::geometry::{self, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neumann: Vec<[[f64; 2]; 2]>,
}

impl MeshFile {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        MeshFile {
            vertices: mesh.vertices.iter().map(|p| [p.x, p.y]).collect(),
            cells: mesh.elements.iter().map(|e| e.vertices.clone()).collect(),
            neumann: mesh
                .neumann_segments()
                .iter()
                .map(|s| [[s.a.x, s.a.y], [s.b.x, s.b.y]])
                .collect(),
        }
    }
}

pub fn mesh_to_json_string(mesh: &Mesh) -> String {
    // serde_json prints shortest round-trip floats, so coordinates survive exactly
    serde_json::to_string_pretty(&MeshFile::from_mesh(mesh)).expect("mesh serializes")
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    fs::write(path, mesh_to_json_string(mesh))?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = fs::read_to_string(path)?;
    mesh_from_json_str(&text)
}

pub fn mesh_from_json_str(text: &str) -> Result<Mesh, MeshError> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| MeshError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let vertices: Vec<Point2> = file.vertices.iter().map(|v| Point2::new(v[0], v[1])).collect();
    let mut cells = Vec::with_capacity(file.cells.len());
    for (c, raw) in file.cells.into_iter().enumerate() {
        let line = cell_line(text, c);
        let fail = |msg: String| MeshError::Parse { line, msg: format!("cell {c}: {msg}") };
        let mut cell = raw;
        if cell.len() > 1 && cell.first() == cell.last() {
            cell.pop();
        }
        if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
            return Err(fail(format!("undefined vertex {v}")));
        }
        if cell.len() < 3 {
            return Err(fail("open polygon: fewer than 3 vertices".into()));
        }
        let pts: Vec<Point2> = cell.iter().map(|&v| vertices[v]).collect();
        let area = geometry::signed_area(&pts);
        if area == 0.0 {
            return Err(fail("polygon has zero area".into()));
        }
        if area < 0.0 {
            log::warn!("cell {c} (line {line}) is clockwise; reorienting");
            cell.reverse();
        }
        if !geometry::is_simple_polygon(&pts) {
            return Err(fail("self-intersecting polygon".into()));
        }
        cells.push(cell);
    }
    let neumann: Vec<Segment> = file
        .neumann
        .iter()
        .map(|s| Segment::new(Point2::new(s[0][0], s[0][1]), Point2::new(s[1][0], s[1][1])))
        .collect();
    let mesh = Mesh::from_polygons(vertices, cells, &neumann).map_err(|e| match e {
        MeshError::InvalidCell { cell, reason } => MeshError::Parse {
            line: cell_line(text, cell),
            msg: format!("cell {cell}: {reason}"),
        },
        other => other,
    })?;
    if !neumann.is_empty() {
        return mesh.classify_boundary(&neumann);
    }
    Ok(mesh)
}

/// 1-based line on which the `index`-th entry of the "cells" array starts.
fn cell_line(text: &str, index: usize) -> usize {
    let Some(start) = text.find("\"cells\"") else {
        return 0;
    };
    let mut depth = 0usize;
    let mut seen = 0usize;
    let mut line = 1 + text[..start].matches('\n').count();
    for ch in text[start..].chars() {
        match ch {
            '\n' => line += 1,
            '[' => {
                depth += 1;
                if depth == 2 {
                    if seen == index {
                        return line;
                    }
                    seen += 1;
                }
            }
            ']' => {
                if depth <= 1 {
                    break;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_voronoi, FacetKind};

    #[test]
    fn round_trip_preserves_mesh() {
        for m in [build_cartesian(2, 2).unwrap(), build_voronoi(30, 5, 1).unwrap()] {
            let back = mesh_from_json_str(&mesh_to_json_string(&m)).unwrap();
            assert_eq!(back.elements.len(), m.elements.len());
            for (a, b) in back.elements.iter().zip(&m.elements) {
                assert_eq!(a.vertices, b.vertices);
                assert_eq!(a.facets, b.facets);
            }
            for (a, b) in back.vertices.iter().zip(&m.vertices) {
                assert!(a.dist(*b) <= 1e-14);
            }
        }
    }

    #[test]
    fn undefined_vertex_reports_line() {
        let text = "{\n \"vertices\": [[0,0],[1,0],[0,1]],\n \"cells\": [\n  [0, 1, 5]\n ]\n}";
        match mesh_from_json_str(text) {
            Err(MeshError::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("undefined vertex"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clockwise_loop_is_reoriented() {
        let text = r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "cells": [[0,3,2,1]]}"#;
        let m = mesh_from_json_str(text).unwrap();
        assert!(m.elements[0].area > 0.0);
    }

    #[test]
    fn neumann_segments_survive() {
        let text = r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "cells": [[0,1,2,3]],
                       "neumann": [[[0,0],[1,0]]]}"#;
        let m = mesh_from_json_str(text).unwrap();
        assert_eq!(m.facets.iter().filter(|f| f.kind == FacetKind::Neumann).count(), 1);
        let back = mesh_from_json_str(&mesh_to_json_string(&m)).unwrap();
        assert_eq!(back.neumann_segments().len(), 1);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            mesh_from_json_str("{\"vertices\": [[0,0]],\n \"cells\": [[0,1"),
            Err(MeshError::Parse { .. })
        ));
    }
}
