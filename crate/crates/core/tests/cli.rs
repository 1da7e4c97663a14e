use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lipext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipext")).current_dir(dir).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_validate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lipext(d, &["--out", "p3.json", "gen", "path", "--n", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let space: Value = serde_json::from_str(&std::fs::read_to_string(d.join("p3.json")).unwrap()).unwrap();
    assert_eq!(space["format"], "lipext/1");

    let v = stdout_json(&lipext(d, &["validate", "--space", "p3.json"]));
    assert_eq!(v["format"], "lipext/1");

    let norm = stdout_json(&lipext(d, &["opnorm", "--space", "p3.json", "--family", "counting", "--subset", "0,2"]));
    let text = norm.to_string();
    assert!(text.contains("\"value\":2.0") || text.contains("\"value\":2"), "{text}");

    let csv = lipext(d, &["report", "--space", "p3.json", "--family", "counting", "--subset", "0,2"]);
    assert!(csv.status.success());
    let csv = String::from_utf8(csv.stdout).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "empirical_norm").unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), 2.0);
}

#[test]
fn extend_reproduces_boundary_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lipext(d, &["--out", "g.json", "gen", "grid", "--k", "3"]).status.success());
    std::fs::write(d.join("f.json"), "[1.0, -2.0, 0.5]").unwrap();
    let v = stdout_json(&lipext(
        d,
        &["extend", "--space", "g.json", "--family", "kernel:0.8", "--subset", "0,4,8", "--f", "f.json"],
    ));
    let text = v.to_string();
    assert!(text.contains("-2.0") && text.contains("0.5"), "{text}");
}

#[test]
fn lift_on_counting_path_passes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lipext(d, &["--out", "p.json", "gen", "path", "--n", "8"]).status.success());
    let out = lipext(d, &["lift", "--space", "p.json", "--family", "counting", "--grid-size", "64"]);
    let v = stdout_json(&out);
    assert!(v.to_string().contains("radial_regularity"));
}

#[test]
fn kr_of_dipole() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lipext(d, &["--out", "p.json", "gen", "path", "--n", "4"]).status.success());
    std::fs::write(d.join("c.json"), "[1, 0, 0, -1]").unwrap();
    let v = stdout_json(&lipext(d, &["kr", "--space", "p.json", "--chain", "c.json"]));
    assert!(v.to_string().contains("3.0"), "{v}");
}

#[test]
fn sweep_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = lipext(dir.path(), &["sweep", "--standard", "6", "--max-points", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("id,name,status"));
    assert!(lines[1..].iter().all(|l| l.contains(",ok,")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lipext(d, &["frobnicate"]).status.code(), Some(2));
    let missing = lipext(d, &["validate", "--space", "missing.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "io");

    std::fs::write(d.join("bad.json"), r#"{"format": "lipext/1", "dist": [[0, 1], [2, 0]]}"#).unwrap();
    let out = lipext(d, &["validate", "--space", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["result"]["ok"], false);
    assert_eq!(report["result"]["violations"][0]["kind"], "asymmetric");
    assert!(lipext(d, &["--out", "p.json", "gen", "path", "--n", "3"]).status.success());
    let out = lipext(d, &["opnorm", "--space", "p.json", "--family", "counting", "--subset", "0,9"]);
    assert_eq!(out.status.code(), Some(2));
}
