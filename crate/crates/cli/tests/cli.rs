use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfsim")).args(args).env_remove("CFSIM_TOL").output().expect("spawn cfsim")
}

fn json(args: &[&str]) -> Value {
    let out = cfsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn code(args: &[&str]) -> i32 {
    cfsim(args).status.code().expect("exit code")
}

fn circuit_file(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "circuits", name].iter().collect();
    p.to_str().unwrap().to_string()
}

fn prob(v: &Value, key: &str) -> f64 {
    v["probabilities"][key].as_f64().unwrap()
}

#[test]
fn run_blocked_mzi() {
    let v = json(&["run", "--builder", "mzi", "--blocked"]);
    assert!((prob(&v, "D") - 0.25).abs() < 1e-12);
    assert!((prob(&v, "other") - 0.25).abs() < 1e-12);
    assert!((prob(&v, "sink") - 0.5).abs() < 1e-12);
    assert_eq!(v["norm_check"]["passed"], Value::Bool(true));
}

#[test]
fn run_file_blocked_nested() {
    let f = circuit_file("nested_mzi.cf");
    let v = json(&["run", "--circuit", &f, "--blocked"]);
    assert!(prob(&v, "D") < 1e-24);
    let v = json(&["run", "--circuit", &f]);
    assert!((prob(&v, "D") - 1.0 / 9.0).abs() < 1e-12);
}

#[test]
fn run_zeno_presence() {
    let v = json(&["run", "--builder", "zeno_presence", "--N", "10", "--blocked"]);
    let expect = (std::f64::consts::PI / 20.0).cos().powi(20);
    assert!((prob(&v, "D") - expect).abs() < 1e-12);
}

#[test]
fn trace_presence_has_no_bob_trace() {
    let v = json(&["trace", "--builder", "mzi", "--blocked", "--post", "D"]);
    assert_eq!(v["verdict"], "counterfactual");
    let entries = v["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    for e in entries.iter().filter(|e| e["region"] == "bob") {
        assert_eq!(e["present"], false, "{e}");
    }
    let amp = v["post_amplitude"].as_array().unwrap();
    assert_eq!(amp.len(), 2);
}

#[test]
fn trace_absence_marks_object_arm() {
    let f = circuit_file("nested_mzi.cf");
    let v = json(&["trace", "--circuit", &f, "--post", "D"]);
    assert_eq!(v["verdict"], "not_counterfactual");
    let a: Vec<&Value> = v["entries"].as_array().unwrap().iter().filter(|e| e["mode"] == "A").collect();
    assert!(!a.is_empty());
    assert!(a.iter().any(|e| e["present"] == true));
}

#[test]
fn trace_dark_port_exits_4() {
    let out = cfsim(&["trace", "--builder", "mzi", "--post", "D"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undefined weak values"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["protocol", "nope"]), 2);
    assert_eq!(code(&["run", "--builder", "nope"]), 2);
    assert_eq!(code(&["run"]), 2);
    assert_eq!(code(&["sweep", "zeno_survival", "--n", "5..2"]), 2);
    assert_eq!(code(&["sweep", "zeno_survival", "--schedule", ""]), 2);
    assert_eq!(code(&["trace", "--builder", "mzi", "--blocked", "--post", "nowhere"]), 2);
    assert_eq!(code(&["trace", "--builder", "mzi", "--blocked", "--post", "D", "--tol", "0"]), 2);
}

#[test]
fn parse_error_names_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cf");
    std::fs::write(&p, "mode X\nmode Y\nlayer\nbs X X theta=pi/4\n").unwrap();
    let out = cfsim(&["run", "--circuit", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4, column 4"), "{err}");
    assert!(err.contains("distinct modes required"), "{err}");
}

#[test]
fn blocked_needs_plate_controlled_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("free.cf");
    std::fs::write(&p, "mode L\nmode R\nmode D kind=detector\ninput L\ndetect D\nlayer\nbs L R theta=pi/4\nlayer\nroute L D\nroute R D\n")
        .unwrap();
    assert_eq!(code(&["run", "--circuit", p.to_str().unwrap(), "--blocked"]), 2);
}

#[test]
fn env_tolerance_is_used() {
    let out = Command::new(env!("CARGO_BIN_EXE_cfsim"))
        .args(["trace", "--builder", "mzi", "--blocked", "--post", "D"])
        .env("CFSIM_TOL", "0.25")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tol"].as_f64(), Some(0.25));
    let out = Command::new(env!("CARGO_BIN_EXE_cfsim"))
        .args(["trace", "--builder", "mzi", "--blocked", "--post", "D"])
        .env("CFSIM_TOL", "-1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn protocol_transfer_bit() {
    let v = json(&["protocol", "transfer_bit", "--N", "50", "--M", "1250", "--bit", "1"]);
    assert!(v["outcome_probabilities"]["D2"].as_f64().unwrap() > 0.8);
    let bob =
        v["counterfactuality"]["regions"].as_array().unwrap().iter().find(|r| r["region"] == "bob").unwrap().clone();
    assert_eq!(bob["present"], false);
}

#[test]
fn protocol_transfer_qubit() {
    let v = json(&["protocol", "transfer_qubit", "--N", "50", "--M", "1250", "--alpha", "0.7071", "--beta", "0.7071"]);
    assert!(v["fidelity"].as_f64().unwrap() > 0.9);
}

#[test]
fn protocol_qkd_is_deterministic() {
    let args = ["protocol", "qkd", "--rounds", "1000", "--seed", "7"];
    let a = cfsim(&args);
    let b = cfsim(&args);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let q = &v["qkd"];
    let frac = q["kept_fraction"].as_f64().unwrap();
    let sigma = q["sigma"].as_f64().unwrap();
    assert!((frac - 0.125).abs() < 4.0 * sigma, "{frac} {sigma}");
    assert_eq!(q["kept_all_bob_one"], true);
    assert_eq!(q["kept_all_counterfactual"], true);
}

#[test]
fn sweep_zeno_matches_closed_form() {
    let out = cfsim(&["sweep", "zeno_survival", "--n", "1..20"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,p_detect,closed_form"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1) as f64);
        assert!((r[1] - r[2]).abs() < 1e-9, "{r:?}");
    }
}

#[test]
fn sweep_transfer_qubit_non_decreasing() {
    let args = ["sweep", "transfer_qubit", "--schedule", "10:250,25:625,50:1250"];
    let out = cfsim(&args);
    assert!(out.status.success());
    assert_eq!(out.stdout, cfsim(&args).stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "fidelity").unwrap();
    let fid: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(fid.len(), 3);
    assert!(fid.windows(2).all(|w| w[1] >= w[0]), "{fid:?}");
}

#[test]
fn use_directive_file() {
    let v = json(&["run", "--circuit", &circuit_file("nested_zeno.cf"), "--blocked"]);
    assert!(prob(&v, "D2") > 0.5);
}
