//! Data are low-degree polynomials so both assemblies integrate them exactly.

use std::sync::Arc;

use polydg::assembly::{assemble, assemble_definitional, relative_max_diff, AssemblyOptions};
use polydg::basis::DegreeVector;
use polydg::geometry::Point2;
use polydg::local_ops::{DiffusionTensor, ProblemData, QuadratureCache};
use polydg::mesh::{build_cartesian, build_voronoi, Mesh, Segment};
use polydg::method::{FacetParams, FluxConfig, MethodKind, Orientation};

fn data(kappa: DiffusionTensor) -> ProblemData {
    ProblemData {
        kappa,
        f: Arc::new(|p: Point2| 1.0 + p.x * p.y * p.y - 0.5 * p.x),
        g_d: Arc::new(|p: Point2| 1.0 + p.x - 2.0 * p.y * p.x),
        g_n: Arc::new(|p: Point2, n: Point2| p.x * n.x + 0.5 * n.y),
    }
}

fn meshes() -> Vec<(&'static str, Mesh)> {
    vec![
        ("cart1x2", build_cartesian(1, 2).unwrap()),
        ("cart2x2", build_cartesian(2, 2).unwrap()),
        ("cart3x3", build_cartesian(3, 3).unwrap()),
        ("vor10", build_voronoi(10, 5, 7).unwrap()),
    ]
}

fn compare(mesh: &Mesh, degrees: &DegreeVector, config: &FluxConfig, d: &ProblemData) -> (f64, f64) {
    let params = FacetParams::new(mesh, degrees, d.kappa.norm(), config).unwrap();
    let quad = QuadratureCache::new(mesh, degrees).unwrap();
    let fast = assemble(mesh, degrees, &params, d, &quad, AssemblyOptions::default()).unwrap();
    let def = assemble_definitional(mesh, degrees, &params, d).unwrap();
    let da = relative_max_diff(&fast.matrix, &def.matrix);
    let scale = def.rhs.amax().max(1e-300);
    let db = (&fast.rhs - &def.rhs).amax() / scale;
    (da, db)
}

#[test]
fn fast_matches_definitional_all_methods() {
    let d = data(DiffusionTensor::identity());
    for (name, mesh) in meshes() {
        for p in 1..=3 {
            let degrees = DegreeVector::uniform(mesh.n_elements(), p).unwrap();
            for m in MethodKind::ALL {
                let (da, db) = compare(&mesh, &degrees, &FluxConfig::new(m), &d);
                assert!(da < 1e-12 && db < 1e-11, "{name} p={p} {m}: matrix {da:e} rhs {db:e}");
            }
        }
    }
}

#[test]
fn anisotropic_tensor_and_oblique_sweep() {
    let d = data(DiffusionTensor::new([[2.0, 0.3], [0.3, 0.7]]).unwrap());
    let mesh = build_voronoi(10, 5, 3).unwrap();
    let degrees = DegreeVector::uniform(mesh.n_elements(), 2).unwrap();
    for m in MethodKind::ALL {
        let mut c = FluxConfig::new(m);
        c.sweep = [0.6, -0.8];
        let (da, db) = compare(&mesh, &degrees, &c, &d);
        assert!(da < 1e-12 && db < 1e-11, "{m}: {da:e} {db:e}");
    }
}

#[test]
fn variable_degree_both_orientations() {
    let d = data(DiffusionTensor::identity());
    let mesh = build_cartesian(3, 3).unwrap();
    let degrees = DegreeVector::new((0..9).map(|k| 1 + k % 3).collect()).unwrap();
    for m in MethodKind::ALL {
        for o in [Orientation::Correct, Orientation::Inverted] {
            let mut c = FluxConfig::new(m);
            c.orientation = o;
            let (da, db) = compare(&mesh, &degrees, &c, &d);
            assert!(da < 1e-12 && db < 1e-11, "{m} {o}: {da:e} {db:e}");
        }
    }
}

#[test]
fn neumann_boundary() {
    let d = data(DiffusionTensor::identity());
    let mesh = build_cartesian(3, 3)
        .unwrap()
        .classify_boundary(&[Segment::new(Point2::new(1.0, 0.0), Point2::new(1.0, 1.0))])
        .unwrap();
    let degrees = DegreeVector::uniform(mesh.n_elements(), 2).unwrap();
    for m in MethodKind::ALL {
        let (da, db) = compare(&mesh, &degrees, &FluxConfig::new(m), &d);
        assert!(da < 1e-12 && db < 1e-11, "{m}: {da:e} {db:e}");
    }
}
