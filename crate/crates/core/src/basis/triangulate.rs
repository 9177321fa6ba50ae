//! Ear-clipping triangulation of simple polygons.

use super::BasisError;
use crate::geometry::{self, Point2};

/// Triangulates a simple counter-clockwise polygon. Vertices lying on a
/// straight edge are dropped first, so an `n`-gon with `c` such vertices
/// yields `n - c - 2` triangles.
pub fn triangulate_polygon(pts: &[Point2]) -> Result<Vec<[Point2; 3]>, BasisError> {
    if pts.len() < 3 {
        return Err(BasisError::BadPolygon("fewer than 3 vertices".into()));
    }
    if !geometry::is_simple_polygon(pts) {
        return Err(BasisError::BadPolygon("self-intersecting polygon".into()));
    }
    let area = geometry::signed_area(pts);
    if area <= 0.0 {
        return Err(BasisError::BadPolygon("polygon is not counter-clockwise".into()));
    }
    let scale = geometry::diameter(pts);
    let eps = 1e-12 * scale * scale;
    let turn = |a: Point2, b: Point2, c: Point2| (b - a).cross(c - b);

    let mut idx: Vec<usize> = (0..pts.len()).collect();
    // drop straight-angle vertices
    let mut k = 0;
    while k < idx.len() && idx.len() > 3 {
        let n = idx.len();
        let (a, b, c) = (pts[idx[(k + n - 1) % n]], pts[idx[k]], pts[idx[(k + 1) % n]]);
        if turn(a, b, c).abs() <= eps && (b - a).dot(c - b) > 0.0 {
            idx.remove(k);
            k = k.saturating_sub(1);
        } else {
            k += 1;
        }
    }

    let mut tris = Vec::with_capacity(idx.len() - 2);
    while idx.len() > 3 {
        let n = idx.len();
        let ear = (0..n).find(|&k| {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if turn(a, b, c) <= eps {
                return false;
            }
            idx.iter().all(|&j| {
                if j == ia || j == ib || j == ic {
                    return true;
                }
                let p = pts[j];
                // strictly outside, or coincident with a vertex of the ear
                !(turn(a, b, p) >= -eps && turn(b, c, p) >= -eps && turn(c, a, p) >= -eps)
                    || p.dist(a) == 0.0
                    || p.dist(b) == 0.0
                    || p.dist(c) == 0.0
            })
        });
        let Some(k) = ear else {
            return Err(BasisError::BadPolygon("no ear found; polygon is degenerate".into()));
        };
        tris.push([pts[idx[(k + n - 1) % n]], pts[idx[k]], pts[idx[(k + 1) % n]]]);
        idx.remove(k);
    }
    tris.push([pts[idx[0]], pts[idx[1]], pts[idx[2]]]);
    Ok(tris)
}
