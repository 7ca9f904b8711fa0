use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const SMALL_GRID: &str = "106,41,301";

fn ecoplan(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ecoplan"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn default_scenario(dir: &Path) -> PathBuf {
    scenario(dir, "default.json", r#"{"trip": {"length": 1000, "horizon": 120}}"#)
}

fn run(command: &str, scenario: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec![
        command,
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ecoplan(&args)
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_a_trajectory_with_header() {
    let tmp = TempDir::new().unwrap();
    let s = default_scenario(tmp.path());
    let out = tmp.path().join("solve");
    let (code, err) = run("solve", &s, &out, &["--grid", SMALL_GRID]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t_s,x_m,v_mps,u,fuel_rate,cum_fuel,speed_limit_mps,grade_mps2")
    );
    assert_eq!(lines.count(), 301);
    assert!(!csv.contains('\r'));
    let slice = std::fs::read_to_string(out.join("value_t0.csv")).unwrap();
    assert_eq!(slice.lines().count(), 42);
    let r = report(&out);
    assert_eq!(r["command"], "solve");
    assert!(r["results"]["fuel"].as_f64().unwrap() > 0.0);
}

#[test]
fn every_emitted_trajectory_is_re_ingestible() {
    let tmp = TempDir::new().unwrap();
    let s = default_scenario(tmp.path());
    for (command, extra) in [("baseline", vec![]), ("oracle", vec!["--stages", "6"])] {
        let out = tmp.path().join(command);
        let (code, err) = run(command, &s, &out, &extra);
        assert_eq!(code, 0, "{command}: {err}");
        let traj = out.join("trajectory.csv");
        let check = tmp.path().join(format!("verify-{command}"));
        let (code, err) = run(
            "verify",
            &s,
            &check,
            &["--grid", SMALL_GRID, "--trajectory", traj.to_str().unwrap()],
        );
        assert_eq!(code, 0, "{command}: {err}");
        assert_eq!(
            report(&check)["results"]["samples"].as_u64().unwrap() as usize,
            std::fs::read_to_string(&traj).unwrap().lines().count() - 1
        );
    }
}

#[test]
fn corrupted_trajectory_is_a_failing_result_not_a_crash() {
    let tmp = TempDir::new().unwrap();
    let s = default_scenario(tmp.path());
    let out = tmp.path().join("solve");
    assert_eq!(run("solve", &s, &out, &["--grid", SMALL_GRID]).0, 0);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let corrupted: Vec<String> = csv
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if (100..200).contains(&i) {
                let mut cols: Vec<&str> = line.split(',').collect();
                cols[3] = "-1.0";
                cols[2] = "-0.5";
                cols.join(",")
            } else {
                line.to_owned()
            }
        })
        .collect();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, corrupted.join("\n")).unwrap();
    let check = tmp.path().join("verify");
    let (code, err) = run(
        "verify",
        &s,
        &check,
        &["--grid", SMALL_GRID, "--trajectory", bad.to_str().unwrap()],
    );
    assert_eq!(code, 0, "{err}");
    let r = &report(&check)["results"];
    assert_eq!(r["kkt"]["passed"], false);
    assert_eq!(r["pmp"]["passed"], false);
    assert!(r["kkt"]["inequality_violation"][2].as_f64().unwrap() == 0.5 || r["kkt"]["error"].is_string());
}

#[test]
fn verify_reads_the_trajectory_named_in_the_scenario() {
    let tmp = TempDir::new().unwrap();
    let s = default_scenario(tmp.path());
    let out = tmp.path().join("solve");
    assert_eq!(run("solve", &s, &out, &["--grid", SMALL_GRID]).0, 0);
    let named = scenario(
        tmp.path(),
        "named.json",
        r#"{"trip": {"length": 1000, "horizon": 120}, "verify": {"trajectory": "solve/trajectory.csv"}}"#,
    );
    let check = tmp.path().join("verify");
    let (code, err) = run("verify", &named, &check, &["--grid", SMALL_GRID]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(run("verify", &s, &check, &["--grid", SMALL_GRID]).0, 8);
}

#[test]
fn documented_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = d.join("out");
    let good = default_scenario(d);
    let cases: Vec<(&str, PathBuf, Vec<&str>, i32)> = vec![
        (
            "solve",
            scenario(d, "broken.json", r#"{"trip": {"length": 1000,"#),
            vec![],
            1,
        ),
        (
            "baseline",
            scenario(d, "short.json", r#"{"trip": {"length": 1000, "horizon": 20}}"#),
            vec![],
            2,
        ),
        ("solve", good.clone(), vec!["--grid", "211,81,61"], 3),
        ("solve", d.join("nowhere.json"), vec![], 5),
        (
            "solve",
            scenario(
                d,
                "typo.json",
                r#"{"trip": {"length": 1000, "horizon": 120, "velcity": 1}}"#,
            ),
            vec![],
            6,
        ),
        (
            "solve",
            scenario(d, "negative.json", r#"{"trip": {"length": -1, "horizon": 120}}"#),
            vec![],
            7,
        ),
        ("oracle", good.clone(), vec!["--stages", "20"], 8),
        ("solve", good.clone(), vec!["--grid", "3,3"], 8),
        ("simulate", good.clone(), vec!["--seed", "4"], 8),
    ];
    for (command, path, extra, expected) in cases {
        let (code, err) = run(command, &path, &out, &extra);
        assert_eq!(code, expected, "{command} {path:?} {extra:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    let (code, err) = run("solve", &d.join("typo.json"), &out, &[]);
    assert_eq!(code, 6);
    assert!(err.contains("velcity"), "{err}");
    assert_eq!(ecoplan(&["--help"]).0, 0);
    assert_eq!(ecoplan(&["fly"]).0, 8);
}

#[test]
fn digest_depends_only_on_inputs() {
    let tmp = TempDir::new().unwrap();
    let s = default_scenario(tmp.path());
    let spaced = scenario(
        tmp.path(),
        "spaced.json",
        "{ \"trip\" : { \"horizon\": 120, \"length\": 1000 } }\n",
    );
    let digest = |path: &Path, name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        assert_eq!(run("oracle", path, &out, extra).0, 0);
        report(&out)["input_digest"].as_str().unwrap().to_owned()
    };
    let a = digest(&s, "a", &["--stages", "4"]);
    assert_eq!(a, digest(&spaced, "b", &["--stages", "4"]));
    assert_ne!(a, digest(&s, "c", &["--stages", "5"]));
}

#[test]
fn simulate_and_compare_on_events() {
    let tmp = TempDir::new().unwrap();
    let s = scenario(
        tmp.path(),
        "events.json",
        r#"{"trip": {"length": 1000, "horizon": 120,
                     "speed_limits": {"boundaries": [0, 400, 700, 1000], "limits": [20, 20, 20]}},
            "penalty": {"speed_limit": 100},
            "events": [{"kind": "speed_limit", "timestamp": 30, "segment": 1, "limit": 6}],
            "noise": {"seed": 3, "position_sd": 0.0, "speed_sd": 0.0}}"#,
    );
    let out = tmp.path().join("sim");
    let (code, err) = run("simulate", &s, &out, &["--grid", SMALL_GRID, "--seed", "9"]);
    assert_eq!(code, 0, "{err}");
    let r = report(&out);
    assert_eq!(r["results"]["estimate_windows"].as_array().unwrap().len(), 12);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    // Segment 1 reads 6 m/s from t = 30 s on.
    assert!(csv.lines().skip(1).any(|l| l.ends_with(",6.0,0.0")));

    let cmp = tmp.path().join("cmp");
    let (code, err) = run("compare", &s, &cmp, &["--grid", SMALL_GRID, "--update-interval", "20"]);
    assert_eq!(code, 0, "{err}");
    let r = &report(&cmp)["results"];
    assert!(r["sequential"]["worst_limit_violation"].as_f64() < r["a_priori"]["worst_limit_violation"].as_f64());
    assert!(cmp.join("a_priori.csv").exists() && cmp.join("sequential.csv").exists());
}
