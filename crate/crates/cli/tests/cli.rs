//! End-to-end tests of the command-line surface: exit-code protocol,
//! solution files, determinism and the CSV output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graph-mfe"))
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn single_vertex(dir: &Path) -> PathBuf {
    write(dir, "single.json", r#"{"vertices":[{"id":"x"}],"edges":[]}"#)
}

fn k2(dir: &Path) -> PathBuf {
    write(
        dir,
        "k2.json",
        r#"{"vertices":[{"id":"a"},{"id":"b"}],"edges":[{"u":"a","v":"b","w":1.0}]}"#,
    )
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited")
}

#[test]
fn solve_dirac_single_vertex_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let graph = single_vertex(dir.path());
    let out_path = dir.path().join("sol.json");
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", "5", "--pole", "x", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{out:?}");

    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let u = sol["field"][0]["value"].as_f64().unwrap();
    assert!((u - 5.0f64.ln()).abs() < 1e-10, "u = {u}");
    assert_eq!(sol["equation"], "dirac");

    // verify the file we just wrote
    let v = bin()
        .args(["verify", "--graph"])
        .arg(&graph)
        .arg("--solution")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&v), 0, "{v:?}");
}

#[test]
fn solve_dirac_budget_exhaustion_is_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", "2", "--pole", "a", "--max-iters", "1", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{out:?}");
}

#[test]
fn solve_dirac_verbose_prints_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", "2", "--pole", "a", "--verbose", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gradient") && err.contains("newton"), "{err}");
}

#[test]
fn solve_dirac_rejects_malformed_graph() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write(dir.path(), "bad.json", "{ not json");
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", "1", "--pole", "x"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_dirac_k2_at_8pi() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let rho = format!("{}", 8.0 * std::f64::consts::PI);
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", &rho, "--pole", "a", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn solve_vortex_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let graph = single_vertex(dir.path());

    // λ = 32π: converged, u ≈ log((1+√½)/2)
    let lambda = format!("{}", 32.0 * std::f64::consts::PI);
    let out_path = dir.path().join("vortex.json");
    let out = bin()
        .args(["solve-vortex", "--graph"])
        .arg(&graph)
        .args(["--lambda", &lambda, "--vortex", "x", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{out:?}");
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let u = sol["field"][0]["value"].as_f64().unwrap();
    let expect = (0.5 * (1.0 + 0.5f64.sqrt())).ln();
    assert!((u - expect).abs() <= 1e-8, "u = {u} vs {expect}");

    // λ = 40 < 16π: no solution, exit 1
    let out = bin()
        .args(["solve-vortex", "--graph"])
        .arg(&graph)
        .args(["--lambda", "40", "--vortex", "x", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);

    // λ ≤ 0: input error
    let out = bin()
        .args(["solve-vortex", "--graph"])
        .arg(&graph)
        .args(["--lambda", "-1", "--vortex", "x"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_vortex_with_repeated_vortices_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let out_path = dir.path().join("m2.json");
    let out = bin()
        .args(["solve-vortex", "--graph"])
        .arg(&graph)
        .args([
            "--lambda", "500", "--vortex", "a", "--vortex", "a", "--quiet", "--out",
        ])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{out:?}");
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(sol["parameters"]["poles"].as_array().unwrap().len(), 2);
    let v = bin()
        .args(["verify", "--graph"])
        .arg(&graph)
        .arg("--solution")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&v), 0, "{v:?}");
}

#[test]
fn lambda_c_brackets_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let graph = single_vertex(dir.path());
    let run = |name: &str| -> String {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["lambda-c", "--graph"])
            .arg(&graph)
            .args(["--vortex", "x", "--quiet", "--out"])
            .arg(&out_path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{out:?}");
        std::fs::read_to_string(out_path).unwrap()
    };
    let a = run("lc1.json");
    let b = run("lc2.json");
    assert_eq!(a, b, "bracket reports must be byte-identical");

    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    let lower = report["lower"].as_f64().unwrap();
    let upper = report["upper"].as_f64().unwrap();
    let target = 16.0 * std::f64::consts::PI;
    let width = 1e-3 * target;
    assert!(upper - lower <= width);
    assert!(lower <= target + 0.01 * width && upper >= target - 1e-9);
    assert_eq!(report["lower_status"], "no_solution_found");
    assert_eq!(report["upper_status"], "converged");
}

#[test]
fn lambda_c_k2_lower_respects_necessary_bound() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let out_path = dir.path().join("lc.json");
    let out = bin()
        .args(["lambda-c", "--graph"])
        .arg(&graph)
        .args(["--vortex", "a", "--quiet", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    let lower = report["lower"].as_f64().unwrap();
    let bound = 8.0 * std::f64::consts::PI;
    let width = 1e-3 * bound;
    assert!(lower >= bound - width, "lower {lower} under the bound {bound}");
}

#[test]
fn torus_green_csv_and_preset_validation() {
    let dir = tempfile::tempdir().unwrap();

    // odd n with the preset is an input error
    let out = bin()
        .args(["torus-green", "--n", "15", "--preset", "tau-half-plus-i"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    // n = 16 runs quickly and reports a small residual
    let csv_path = dir.path().join("t16.csv");
    let started = Instant::now();
    let out = bin()
        .args(["torus-green", "--n", "16", "--quiet", "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    let elapsed = started.elapsed();
    assert_eq!(code(&out), 0);
    assert!(elapsed.as_secs_f64() < 1.0, "n=16 took {elapsed:?}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let residual: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# green_residual_sup,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-9);

    // n = 64: at least 5 critical rows and a slope line
    let csv_path = dir.path().join("t64.csv");
    let out = bin()
        .args(["torus-green", "--n", "64", "--quiet", "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .count();
    assert!(rows >= 5, "only {rows} critical rows");
    let slope: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# slope,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 25.0 / 64.0).abs() / (25.0 / 64.0) <= 0.05);

    // explicit periods go through the same path
    let out = bin()
        .args(["torus-green", "--n", "2", "--periods", "2,0,1,2", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{out:?}");
}

#[test]
fn solution_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let run = |name: &str| -> String {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["solve-dirac", "--graph"])
            .arg(&graph)
            .args(["--rho", "2", "--pole", "a", "--quiet", "--out"])
            .arg(&out_path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        std::fs::read_to_string(out_path).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn verify_detects_tampering_and_wrong_graph() {
    let dir = tempfile::tempdir().unwrap();
    let graph = k2(dir.path());
    let out_path = dir.path().join("sol.json");
    let out = bin()
        .args(["solve-dirac", "--graph"])
        .arg(&graph)
        .args(["--rho", "2", "--pole", "a", "--quiet", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);

    // tamper with a field value: residual no longer matches
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut sol: serde_json::Value = serde_json::from_str(&text).unwrap();
    let old = sol["field"][0]["value"].as_f64().unwrap();
    sol["field"][0]["value"] = serde_json::json!(old + 0.25);
    let tampered = write(dir.path(), "tampered.json", &sol.to_string());
    let out = bin()
        .args(["verify", "--graph"])
        .arg(&graph)
        .arg("--solution")
        .arg(&tampered)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);

    // different graph: hash mismatch is an input error
    let other = write(
        dir.path(),
        "other.json",
        r#"{"vertices":[{"id":"a"},{"id":"b","mu":2.0}],"edges":[{"u":"a","v":"b","w":1.0}]}"#,
    );
    let out = bin()
        .args(["verify", "--graph"])
        .arg(&other)
        .arg("--solution")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
