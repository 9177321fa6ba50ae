//! Greedy agglomeration of a fine mesh into polygonal clusters.
//!
//! Clusters grow from a seed element by repeatedly absorbing the unassigned
//! neighbor that shares the most facets with the cluster, as long as the union
//! stays a simple polygon (one boundary loop, no pinched vertices). Clusters
//! smaller than half the target are afterwards merged into an adjacent cluster
//! when the union is still simple.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mesh, MeshError};

pub fn agglomerate(base: &Mesh, target_size: usize, rng_seed: u64) -> Result<Mesh, MeshError> {
    if target_size < 2 {
        return Err(MeshError::Internal("target_size must be at least 2".into()));
    }
    let n = base.n_elements();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut next_seed = Some(rng.gen_range(0..n));

    while let Some(seed) = next_seed {
        let cid = clusters.len();
        let mut members = vec![seed];
        owner[seed] = Some(cid);
        while members.len() < target_size {
            // candidates: unassigned neighbors ranked by contact with the cluster
            let mut cands: Vec<(usize, usize)> = Vec::new();
            for &m in &members {
                for &nb in &base.neighbors[m] {
                    if owner[nb].is_none() && !cands.iter().any(|c| c.1 == nb) {
                        let contact = base.neighbors[nb]
                            .iter()
                            .filter(|&&k| owner[k] == Some(cid))
                            .count();
                        cands.push((contact, nb));
                    }
                }
            }
            cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut added = false;
            for &(_, c) in &cands {
                members.push(c);
                if boundary_loop(base, &members).is_some() {
                    owner[c] = Some(cid);
                    added = true;
                    break;
                }
                members.pop();
            }
            if !added {
                break;
            }
        }
        clusters.push(members);

        // next seed: unassigned element touching most assigned elements
        next_seed = (0..n)
            .filter(|&k| owner[k].is_none())
            .map(|k| {
                let touch = base.neighbors[k].iter().filter(|&&j| owner[j].is_some()).count();
                (touch, k)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, k)| k);
    }

    merge_small_clusters(base, &mut clusters, &mut owner, target_size);

    let mut loops = Vec::with_capacity(clusters.len());
    for members in clusters.iter().filter(|c| !c.is_empty()) {
        let lp = boundary_loop(base, members).ok_or_else(|| {
            MeshError::Internal("agglomerate boundary is not a single simple loop".into())
        })?;
        loops.push(lp);
    }
    // keep only referenced vertices
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    for lp in &mut loops {
        for v in lp.iter_mut() {
            let nv = *remap.entry(*v).or_insert_with(|| {
                vertices.push(base.vertices[*v]);
                vertices.len() - 1
            });
            *v = nv;
        }
    }
    Mesh::from_polygons(vertices, loops, &base.neumann_segments())
}

fn merge_small_clusters(
    base: &Mesh,
    clusters: &mut [Vec<usize>],
    owner: &mut [Option<usize>],
    target_size: usize,
) {
    let min_size = target_size.div_ceil(2);
    for cid in 0..clusters.len() {
        if clusters[cid].is_empty() || clusters[cid].len() >= min_size {
            continue;
        }
        // adjacent clusters ordered by number of shared facets
        let mut contact: HashMap<usize, usize> = HashMap::new();
        for &m in &clusters[cid] {
            for &nb in &base.neighbors[m] {
                if let Some(o) = owner[nb] {
                    if o != cid {
                        *contact.entry(o).or_default() += 1;
                    }
                }
            }
        }
        let mut order: Vec<(usize, usize)> = contact.into_iter().map(|(o, c)| (c, o)).collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, other) in order {
            let mut union = clusters[other].clone();
            union.extend_from_slice(&clusters[cid]);
            if boundary_loop(base, &union).is_some() {
                for &m in &clusters[cid] {
                    owner[m] = Some(other);
                }
                clusters[other] = union;
                clusters[cid].clear();
                break;
            }
        }
    }
}

/// Counter-clockwise boundary vertex loop of the union of `members`, or `None`
/// when the union is not bounded by a single simple loop.
fn boundary_loop(base: &Mesh, members: &[usize]) -> Option<Vec<usize>> {
    let mut edges: HashMap<(usize, usize), ()> = HashMap::new();
    for &m in members {
        let lp = &base.elements[m].vertices;
        let k = lp.len();
        for i in 0..k {
            edges.insert((lp[i], lp[(i + 1) % k]), ());
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in edges.keys() {
        if edges.contains_key(&(b, a)) {
            continue;
        }
        if next.insert(a, b).is_some() {
            return None; // pinched vertex
        }
    }
    let start = *next.keys().min()?;
    let mut lp = vec![start];
    let mut cur = next[&start];
    while cur != start {
        lp.push(cur);
        cur = *next.get(&cur)?;
        if lp.len() > next.len() {
            return None;
        }
    }
    if lp.len() != next.len() {
        return None; // several loops (holes or disconnected pieces)
    }
    Some(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_triangular, build_voronoi};

    #[test]
    fn two_by_two_into_one() {
        let m = agglomerate(&build_cartesian(2, 2).unwrap(), 4, 0).unwrap();
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.n_interior_facets(), 0);
        assert_eq!(m.facets.len(), 4);
    }

    #[test]
    fn four_by_four_into_four() {
        let m = agglomerate(&build_cartesian(4, 4).unwrap(), 4, 0).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangles_agglomerate_into_valid_polygons() {
        let m = agglomerate(&build_triangular(8, 8).unwrap(), 6, 1).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        for e in &m.elements {
            assert!(e.facets.len() >= 3);
            let per: f64 = e.facets.iter().map(|&f| m.facets[f].length).sum();
            let pts = m.element_points(e.id);
            let perimeter: f64 = (0..pts.len()).map(|i| pts[i].dist(pts[(i + 1) % pts.len()])).sum();
            assert!((per - perimeter).abs() < 1e-12 * perimeter);
        }
    }

    #[test]
    fn voronoi_agglomerates_have_many_facets() {
        let base = build_voronoi(400, 20, 5).unwrap();
        let m = agglomerate(&base, 8, 2).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-10);
        assert!(m.stats().mean_facets_per_element > base.stats().mean_facets_per_element);
    }
}
