use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn droplet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_droplet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let start = text.find("{\n").expect("summary json on stdout");
    serde_json::from_str(&text[start..]).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

#[test]
fn empty_args_run_solve_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["command"], "solve");
    assert!((s["lambda"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((s["min_contact_slope"].as_f64().unwrap() - 0.975).abs() < 1e-12);
    assert!(tmp.path().join("out/solve_trace.csv").is_file());
}

#[test]
fn spectrum_reports_kernel_and_gap() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["spectrum", "--mu", "0.05", "-N", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["kernel_count"], 2);
    assert!((s["gap_perp"].as_f64().unwrap() - 1.0).abs() < 1e-2);
    let csv = fs::read_to_string(tmp.path().join("out/spectrum.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "re,im");
    assert_eq!(rows.len(), 34);
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "command = solve\nmu = 0.05\nn-modes = 8\n").unwrap();
    let out = droplet(tmp.path(), &["--config", "run.cfg", "--mu=0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("out/solve_summary.csv")).unwrap();
    assert!(csv.contains("# mu = 0.1\n"));
    assert!(csv.contains("# n_modes = 8\n"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.cfg"), "viscosity = 3\n").unwrap();
    let out = droplet(tmp.path(), &["--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("viscosity"));
}

#[test]
fn malformed_number_names_key() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["solve", "--t-end", "ten"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("t_end"));
    let out = droplet(tmp.path(), &["solve", "--volume", "-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("volume"));
}

#[test]
fn conflicting_commands_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["solve", "--command", "spectrum"]);
    assert_eq!(out.status.code(), Some(1));
    let out = droplet(tmp.path(), &["--command", "spectrum", "-N", "8"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["command"], "spectrum");
}

#[test]
fn numerical_failure_exits_two_with_error_json() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(
        tmp.path(),
        &["evolve", "-N", "8", "--dt", "5", "--t-end", "50", "--shape", "4:0.2:0"],
    );
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert!(e["error"]["kind"].is_string());
    assert_ne!(e["error"]["kind"], "config");
    assert!(tmp.path().join("out/trajectory.csv").is_file());
}

#[test]
fn steep_incline_halts_immediately() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["evolve", "--mu", "5", "-N", "8", "--t-end", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["halt"], "parabolicity_lost");
    assert_eq!(s["t"], 0.0);
}

#[test]
fn sweep_finds_critical_incline() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["sweep-mu", "-N", "8", "--mu-steps", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert!((s["mu_star"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    let csv = fs::read_to_string(tmp.path().join("out/sweep_mu.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "mu,min_contact_slope,leading_nonzero_real"));
}

#[test]
fn validate_passes() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["validate", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("[PASS]")).count() >= 10);
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn outputs_are_deterministic_and_carry_config() {
    let tmp = TempDir::new().unwrap();
    let args = [
        "stability", "-N", "8", "--mu", "0.05", "--dt", "0.01", "--t-end", "1", "--record-every", "10",
        "--shape", "2:0.01:0,1:0.02:0",
    ];
    let first = droplet(tmp.path(), &args);
    assert_eq!(first.status.code(), Some(0));
    let a = fs::read(tmp.path().join("out/stability.csv")).unwrap();
    let second = droplet(tmp.path(), &args);
    let b = fs::read(tmp.path().join("out/stability.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# droplet "));
    assert!(text.contains("# shape = 2:0.01:0,1:0.02:0\n"));
    assert!(text.lines().last().unwrap().starts_with("#summary "));
    let z = summary(&first)["z_initial"][0].as_f64().unwrap();
    assert!((z - 0.02).abs() < 1e-3);
}

#[test]
fn json_format_embeds_config() {
    let tmp = TempDir::new().unwrap();
    let out = droplet(tmp.path(), &["spectrum", "-N", "6", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/spectrum.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["n_modes"], "6");
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 13);
    let dump = fs::read_to_string(tmp.path().join("out/dh0_matrix.txt")).unwrap();
    assert!(dump.starts_with("# droplet "));
}

#[test]
fn shape_file_round_trip() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("shape.txt"),
        "# cos 2θ perturbation\n1.0 8 32\n0 0 0\n1 0 0\n2 0.005 0\n",
    )
    .unwrap();
    let out = droplet(tmp.path(), &["solve", "-N", "8", "--shape-file", "shape.txt", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/solve.json")).unwrap()).unwrap();
    let rho0 = v["trace"]["rho"][0].as_f64().unwrap();
    assert!((rho0 - 0.01).abs() < 1e-12);
    let missing = droplet(tmp.path(), &["solve", "--shape-file", "nope.txt"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr_json(&missing)["error"]["message"].as_str().unwrap().contains("shape_file"));
}
