use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn dyson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyson"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn spec_file(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    root.join(name).to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn plan_emits_json_with_power_of_two_fields() {
    let out = dyson(&[
        "plan",
        "--spec",
        &spec_file("sigma_x.json"),
        "--eps",
        "1e-2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    for key in ["r", "M", "L"] {
        assert!(v["plan"][key].as_u64().unwrap().is_power_of_two());
    }
    assert_eq!(v["config"]["eps"].as_f64(), Some(1e-2));
}

#[test]
fn malformed_spec_exits_2() {
    let dir = std::env::temp_dir().join(format!("dyson-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.json");
    std::fs::write(&path, "{\"n\": 1, \"d\": ").unwrap();
    let out = dyson(&["plan", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, r#"{"n":1,"d":1,"t0":0,"T":1,"entries":[{"row":1,"col":0,"envelope":{"type":"constant","re":1}}]}"#).unwrap();
    assert_eq!(
        dyson(&["plan", "--spec", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dyson(&["plan", "--spec", "/definitely/missing.json"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn capacity_overflow_exits_3_and_names_parameter() {
    let out = dyson(&[
        "plan",
        "--spec",
        "builtin:sigma_x",
        "--eps",
        "1e-6",
        "--cap",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("relax M"), "{err}");
}

#[test]
fn run_exits_0_under_both_schemes_and_reports_differ() {
    let mut ms = Vec::new();
    for scheme in ["compressed", "sorted"] {
        let out = dyson(&[
            "run",
            "--spec",
            &spec_file("cos_sigma_z.json"),
            "--eps",
            "1e-2",
            "--scheme",
            scheme,
        ]);
        assert_eq!(out.status.code(), Some(0), "{scheme}");
        let v = stdout_json(&out);
        assert!(v["run"]["total_error"].as_f64().unwrap() <= 1e-2);
        assert_eq!(v["run"]["psi0"], "basis:0");
        ms.push((
            v["run"]["plan"]["M"].as_u64().unwrap(),
            v["predictions"]["gate_pred"].as_f64().unwrap(),
        ));
    }
    assert!(ms[0] != ms[1], "{ms:?}");
}

#[test]
fn broken_truncation_exits_4() {
    let out = dyson(&[
        "run",
        "--spec",
        "builtin:sigma_x",
        "--eps",
        "1e-2",
        "--force-K",
        "0",
        "--unsafe-overrides",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stdout_json(&out)["run"]["within_budget"], false);
}

#[test]
fn forced_violation_without_unsafe_is_rejected() {
    let out = dyson(&["plan", "--spec", "builtin:sigma_x", "--force-K", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("planner invariant"));
}

#[test]
fn runs_are_deterministic_given_seed() {
    let args = [
        "run",
        "--spec",
        "builtin:random:2:2",
        "--seed",
        "5",
        "--psi0",
        "random",
        "--eps",
        "0.1",
    ];
    let a = stdout_json(&dyson(&args));
    let b = stdout_json(&dyson(&args));
    assert_eq!(a["run"]["psi_t"], b["run"]["psi_t"]);
    assert_eq!(a["config"]["seed"], 5);
}

#[test]
fn clock_compare_reports_deviation() {
    let out = dyson(&["clock-compare", "--K", "2", "--M", "4", "--zeta", "0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v["max_ratio_deviation"].as_f64().unwrap() <= 1e-10);
    let v = stdout_json(&dyson(&["clock-compare", "--K", "4", "--M", "4"]));
    assert_eq!(v["compressed"]["mu2"].as_f64(), Some(0.0));
}

#[test]
fn sweep_writes_csv_to_out() {
    let path = std::env::temp_dir().join(format!("dyson-sweep-{}.csv", std::process::id()));
    let out = dyson(&[
        "sweep",
        "--spec",
        "builtin:sigma_x",
        "--eps",
        "0.1",
        "--param",
        "K",
        "--values",
        "1,2,3",
        "--jobs",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("x,measured,predicted,ratio,error,r,K,M,L,status")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn unknown_psi0_is_an_input_error() {
    let out = dyson(&["run", "--spec", "builtin:sigma_x", "--psi0", "plus"]);
    assert_eq!(out.status.code(), Some(1));
}
