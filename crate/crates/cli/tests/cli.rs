use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn tripod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tripod")).args(args).output().unwrap()
}

fn scratch_file(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("tripod-cli-{}-{name}", std::process::id()));
    fs::write(&path, contents).unwrap();
    path
}

fn machine(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "machine"]);
    let out = tripod(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gate_preset_reports_high_fidelity() {
    let doc = machine(&["gate", "--preset", "x-pi-optical"]);
    assert_eq!(doc["command"], "gate");
    assert!(doc["results"]["fidelity"].as_f64().unwrap() > 0.999);
    assert!(doc["results"]["leakage"].as_f64().unwrap() < 1e-3);
}

#[test]
fn zero_phase_gives_identity() {
    let cfg = scratch_file(
        "identity.toml",
        "command = \"gate\"\n[gate]\npreset = \"x-pi-optical\"\nduration = \"240 us\"\nphase = \"0 rad\"\n",
    );
    let out = tripod(&["gate", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    assert!(text.contains("target: identity"), "{text}");
    let doc = machine(&["gate", "--config", cfg.to_str().unwrap()]);
    assert!(doc["results"]["fidelity"].as_f64().unwrap() >= 0.9999);
    fs::remove_file(cfg).unwrap();
}

#[test]
fn missing_unit_is_a_config_error_with_line() {
    let cfg = scratch_file("nounit.toml", "[gate]\nduration = \"120\"\n");
    let out = tripod(&["gate", "--preset", "x-pi-optical", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2") && err.contains("missing unit"), "{err}");
    fs::remove_file(cfg).unwrap();
}

#[test]
fn unknown_preset_exits_with_config_code() {
    let out = tripod(&["gate", "--preset", "no-such-gate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn command_mismatch_is_rejected() {
    let cfg = scratch_file("mismatch.toml", "command = \"sweep\"\n");
    let out = tripod(&["gate", "--preset", "x-pi-optical", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    fs::remove_file(cfg).unwrap();
}

#[test]
fn tomo_fixture_prints_table() {
    let out = tripod(&["tomo", "--fixture", "table1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for label in ["x-pi", "z-pi", "hadamard"] {
        assert!(text.contains(label), "{text}");
    }
    assert!(text.contains("0.966"), "{text}");
}

#[test]
fn tomo_empty_input_is_an_empty_report() {
    let path = scratch_file("empty.csv", "");
    let out = tripod(&["tomo", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    fs::remove_file(path).unwrap();
}

#[test]
fn tomo_malformed_record_names_line() {
    let path = scratch_file("bad.csv", "x-pi,0.5,0.5\n");
    let out = tripod(&["tomo", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 1"));
    fs::remove_file(path).unwrap();
}

#[test]
fn fringe_writes_plot_data() {
    let dir = std::env::temp_dir().join(format!("tripod-cli-{}-fringe", std::process::id()));
    let out = tripod(&["fringe", "--preset", "x-pi-optical", "--points", "5", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let tsv = fs::read_to_string(dir.join("fringe.tsv")).unwrap();
    assert!(tsv.starts_with("phi_rad\tpopulation"));
    assert_eq!(tsv.lines().count(), 6);
    assert!(dir.join("summary.txt").exists());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn verbatim_hadamard_fails_validation() {
    let out = tripod(&["validate", "--verbatim-hadamard"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}
