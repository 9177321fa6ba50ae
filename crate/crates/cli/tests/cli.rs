use std::path::Path;
use std::process::Command;

fn polydg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_polydg")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn solve_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", "method = cdg\nmesh.type = cartesian\nmesh.n = 4\ndegree = 1\nms = sincos\n");
    let out = dir.path().join("out");
    let o = polydg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "study,method,mesh_type,n_elements,h,p,n_dofs,nnz,err_l2,err_cdg,rate_l2,rate_cdg,t_assembly_s,t_solve_s,lambda_min,cond2,solver_iters,solver_residual"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("solve,CDG,cartesian,16,"), "{}", lines[1]);
    let mtx = std::fs::read_to_string(out.join("matrix.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real"));
    let pattern = std::fs::read_to_string(out.join("pattern.csv")).unwrap();
    assert_eq!(pattern.lines().next(), Some("row,col"));
    // 9 (N_el + 2 N_F^I) entries for p = 1 on a 4x4 grid
    assert_eq!(pattern.lines().count() - 1, 9 * (16 + 2 * 24));
    let sol: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["runs"][0]["centroid_values"].as_array().unwrap().len(), 16);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.conf", "method = cdg\nmesh.size = 4\n");
    let o = polydg(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mesh.size") && err.contains("unknown key"), "{err}");
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn mesh_files_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = polydg::mesh::build_voronoi(12, 5, 1).unwrap();
    polydg::mesh::save_mesh(&mesh, dir.path().join("m.pmesh.json")).unwrap();
    let cfg = write(dir.path(), "f.conf", "method = ldg_w\nmesh.type = file\nmesh.file = m.pmesh.json\ndegree = 2\n");
    let out = dir.path().join("o");
    let o = polydg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",file,12,"));

    let vcfg = write(dir.path(), "v.conf", "mesh.type = voronoi\nmesh.n = 20\ndegree = 1\n");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(polydg(&["solve", "--config", &vcfg, "--out", out.to_str().unwrap(), "--seed", seed]).status.success());
        std::fs::read_to_string(out.join("pattern.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
}

#[test]
fn p_study_reports_one_row_per_degree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.conf", "mesh.type = cartesian\nmesh.n = 3\ndegree = 1..3\n");
    let o = polydg(&["p-study", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("p-study,")).count(), 3);
}
