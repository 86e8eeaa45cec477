use std::fs;
use std::path::Path;

use clap::Parser;
use wplab::cli::{run, Cli, EXIT_CONFIG, EXIT_PASS, EXIT_SOLVER};

fn run_with(dir: &Path, config: &str, args: &[&str]) -> i32 {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut argv = vec!["wplab", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(&Cli::parse_from(argv))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with(dir.path(), "genus=2\nbogus=1\n", &["surface"]), EXIT_CONFIG);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cli = Cli::parse_from(["wplab", "--config", "/nonexistent/x.cfg", "--out", out.to_str().unwrap(), "surface"]);
    assert_eq!(run(&cli), EXIT_CONFIG);
}

#[test]
fn surface_writes_mesh_and_report() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with(dir.path(), "refine=1\ncover_degree=1\n", &["surface"]), EXIT_PASS);
    let rep = read(dir.path(), "surface.txt");
    assert!(rep.contains("euler_characteristic: -2"), "{rep}");
    assert!(rep.contains("exit_code: 0"));
    assert!(rep.contains("config.refine: 1"));
    let mesh = read(dir.path(), "mesh.wplab");
    assert!(mesh.starts_with("WPLAB-MESH v1"));
    let dom = wplab::mesh::TriangulatedDomain::from_mesh_text(&mesh).unwrap();
    assert_eq!(dom.to_mesh_text(), mesh);
}

#[test]
fn solver_budget_exhaustion_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with(dir.path(), "refine=1\nsolver_max_iter=1\n", &["solve"]), EXIT_SOLVER);
    assert!(read(dir.path(), "solve.txt").contains("exit_code: 3"));
}

#[test]
fn solve_is_deterministic_in_the_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_with(a.path(), "refine=1\n", &["--seed", "7", "solve"]), EXIT_PASS);
    assert_eq!(run_with(b.path(), "refine=1\n", &["--seed", "7", "solve"]), EXIT_PASS);
    let (ma, mb) = (read(a.path(), "map.wplab"), read(b.path(), "map.wplab"));
    assert_eq!(ma, mb);
    let map = wplab::harmonic::EquivariantMap::from_map_text(&ma).unwrap();
    assert_eq!(map.to_map_text(), ma);
    assert!(read(a.path(), "solve.txt").contains("degree: 2"));
}

#[test]
fn zero_truncation_sweep_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_with(dir.path(), "refine=1\nq_truncation=0\nt_max=0.01\n", &["sweep"]), EXIT_PASS);
    let csv = read(dir.path(), "curve.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,energy,grad_norm"));
    let e: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(e.len(), 5);
    for x in &e {
        assert!((x - e[0]).abs() <= 1e-9 * e[0], "{e:?}");
    }
}

#[test]
fn certify_writes_certificate_and_derivatives() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_with(dir.path(), "refine=2\nq_truncation=4\n", &["certify"]);
    let cert = read(dir.path(), "certificate.txt");
    assert!(cert.contains(&format!("exit_code: {code}")), "{cert}");
    assert!(code == 0 || code == 1, "{cert}");
    assert!(cert.contains("is_critical: "));
    let derivs = read(dir.path(), "derivs.csv");
    let mut lines = derivs.lines();
    assert_eq!(lines.next(), Some("mu_id,fd1,formula1,fd2,formula2,wp4,hproj4"));
    assert_eq!(lines.count(), 3);
    for l in cert.lines() {
        assert!(l.contains(": "), "not key: value: {l}");
    }
}
