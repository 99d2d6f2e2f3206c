use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn pfcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfcert")).args(args).output().unwrap()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn certify_exit_codes() {
    let ok = pfcert(&["certify", path(&data("case9.m"))]);
    assert_eq!(ok.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["holds"], Value::Bool(true));

    let fails = pfcert(&["certify", path(&data("case300.m"))]);
    assert_eq!(fails.status.code(), Some(1));

    let missing = pfcert(&["certify", "no_such_case.m"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn unknown_bus_is_an_input_error() {
    let out = pfcert(&["bounds", path(&data("case39.m")), "--bus", "999"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_beyond_the_limit_is_a_numerical_error() {
    let out = pfcert(&["solve", path(&data("case9.m")), "--scale", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_agrees_with_newton() {
    let out = pfcert(&["solve", path(&data("case14.m")), "--with-oracle"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_newton_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["buses"].as_array().unwrap().len(), 9);
}

#[test]
fn direction_file_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let direction = dir.path().join("dir.csv");
    std::fs::write(&direction, "bus,p_mw,q_mvar\n5,100,0\n").unwrap();
    let out_file = dir.path().join("limits.csv");
    let out = pfcert(&[
        "limits",
        path(&data("case9.m")),
        "--direction-file",
        path(&direction),
        "--out-format",
        "csv",
        "--out",
        path(&out_file),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_file).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("critical_bus"), "5");
    assert!(col("lambda_p").parse::<f64>().unwrap() > 0.0);
}

#[test]
fn sweep_and_profile_shapes() {
    let out = pfcert(&["sweep", path(&data("case9.m")), "--steps", "3"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 9);

    let out = pfcert(&["bounds", path(&data("case39.m")), "--bus", "4", "--lambda-from", "1", "--lambda-to", "1.1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 11);
}

#[test]
fn oracle_limit_two_bracket_forms() {
    let out = pfcert(&["oracle-limit", path(&data("case9Q.m"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let l = v["lambda_actual"].as_f64().unwrap();
    assert!((l - 2.6577).abs() / 2.6577 < 0.02);
    let out = pfcert(&["oracle-limit", path(&data("case9Q.m")), "--bracket-lo", "10"]);
    assert_eq!(out.status.code(), Some(3));
}
