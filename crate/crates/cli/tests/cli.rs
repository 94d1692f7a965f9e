use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracbubble"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FRACBUBBLE_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn constants_are_deterministic_and_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config();
    let first = run(&["--config", cfg.to_str().unwrap(), "constants"], dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let bytes = std::fs::read(dir.path().join("constants.json")).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["residuals_within_tol"], true);
    let b = v["constants"]["values"]["b"].as_f64().unwrap();
    assert!((b - 0.727_089_806_682_866_7).abs() < 1e-12);
    let second = run(&["--config", cfg.to_str().unwrap(), "constants"], dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(bytes, std::fs::read(dir.path().join("constants.json")).unwrap());
    let manifest = json(&dir.path().join("constants.manifest.json"));
    assert_eq!(manifest["config_hash"], v["config_hash"]);
    assert_eq!(manifest["files"][0], "constants.json");
}

#[test]
fn invalid_order_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\ns = 1.5\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "constants"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("s ") || msg.contains("(0, 1)"), "{msg}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nn = 1\nexponent = 4\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "constants"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exponent"));
}

#[test]
fn robin_profile_is_monotone_along_the_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["robin"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("robin.json"))["monotone"], true);
    let text = std::fs::read_to_string(dir.path().join("robin.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "xi0,dist,robin,robin_closed_form");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert!((r[2] / r[3] - 1.0).abs() < 1e-2, "{r:?}");
    }
}

#[test]
fn psi_scan_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[problem]\noperator = \"spectral\"\n[scan]\nxi_steps = 7\nlambda_steps = 5\n",
    );
    let out = run(&["--config", cfg.to_str().unwrap(), "psi-scan"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/psi_scan.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 35);
}

#[test]
fn critical_point_on_the_ball_is_the_center() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--seed", "3", "find-critical"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("critical.json"));
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert!(points[0]["xi"][0][0].as_f64().unwrap().abs() < 1e-8);
    assert!((points[0]["lambda"][0].as_f64().unwrap() - 1.647_111_574_061_036).abs() < 1e-8);
    assert_eq!(points[0]["stable"], true);
}

#[test]
fn ansatz_writes_positive_solutions_for_each_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\neps = [0.04, 0.02]\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "ansatz"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&dir.path().join("out/ansatz.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["positive"] == true && r["contraction"].as_f64().unwrap() < 0.5));
    assert!(dir.path().join("out/ansatz_eps1.csv").exists());
}

#[test]
fn spectral_ansatz_reports_an_unsupported_combination() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\noperator = \"spectral\"\neps = [0.04]\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "ansatz"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_refuses_outputs_of_another_configuration() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--seed", "1", "constants"], dir.path()).status.code(), Some(0));
    let out = run(&["--seed", "2", "verify"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("constants.json"));
}

#[test]
fn verify_on_the_desk_configuration_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config();
    let out = run(&["--config", cfg.to_str().unwrap(), "verify"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    println!("{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion ")).count(), 9);
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["criteria"].as_array().unwrap().len(), 9);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
}
