use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/problems").join(format!("{name}.occ"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occurelax")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn missing_file_is_a_usage_error() {
    let o = run(&["solve", "does-not-exist.occ"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist.occ"));
}

#[test]
fn malformed_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.occ");
    fs::write(&f, "occurelax-problem v1\n[domain]\nn = 1\n").unwrap();
    assert_eq!(code(&run(&["solve", f.to_str().unwrap()])), 2);
}

#[test]
fn unknown_flag_and_id_are_usage_errors() {
    assert_eq!(code(&run(&["solve", "x.occ", "--bogus"])), 2);
    assert_eq!(code(&run(&["reproduce", "bogus"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn export_mps_writes_only_the_program() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", problem("dirichlet-1d").to_str().unwrap(), "--export-mps", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mps = fs::read_to_string(dir.path().join("problem.mps")).unwrap();
    assert!(mps.starts_with("NAME"));
    assert!(mps.trim_end().ends_with("ENDATA"));
    assert!(dir.path().join("manifest.json").exists());
    assert!(!dir.path().join("values.csv").exists());
}

#[test]
fn solve_both_modes_writes_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", problem("dirichlet-1d").to_str().unwrap(), "--mode", "both", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("values.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("affine,optimal,"));
    assert!(lines[2].starts_with("nonlinear,optimal,"));
    let manifest: String = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("problem_sha256"));
    assert!(dir.path().join("centroids.csv").exists());
}

#[test]
fn compare_on_zero_lagrangian_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["compare", problem("zero-lagrangian").to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sandwich.csv")).unwrap();
    assert!(csv.contains("envelope,0\n"));
    assert!(!csv.contains("fail"));
}

#[test]
fn reproduce_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["reproduce", "ex-4.2", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let va = fs::read(a.path().join("values.csv")).unwrap();
    let vb = fs::read(b.path().join("values.csv")).unwrap();
    assert!(!va.is_empty());
    assert_eq!(va, vb);
}
