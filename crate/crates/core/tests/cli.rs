//! End-to-end runs of the `hardy-sphere` binary.

use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardy-sphere"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn verify_lemmas_lists_every_identity() {
    let o = run(&["verify-lemmas", "--n", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ids = v["dimensions"][0]["identities"].as_array().unwrap();
    assert_eq!(ids.len(), 7);
    assert!(ids
        .iter()
        .all(|r| r["max_deviation"].as_f64().unwrap() < r["tolerance"].as_f64().unwrap()));
}

#[test]
fn counterexample_exit_codes() {
    let o = run(&["counterexample", "--n", "7", "--p", "2"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"]["kind"], "found");
    assert!(v["outcome"]["excess"].as_f64().unwrap() > 0.0);

    let o = run(&["counterexample", "--n", "4", "--p", "2"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"]["kind"], "undetermined");
}

#[test]
fn sweep_writes_csv_to_file_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let o = run(&[
            "sweep",
            "--ineq",
            "f3",
            "--form",
            "shrp3",
            "--n",
            "5",
            "--p",
            "2",
            "--format",
            "csv",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(
        lines[0],
        "eps,ratio_quadrature,ratio_closed_form,rel_gap,target"
    );
    let last: Vec<f64> = lines
        .last()
        .unwrap()
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(last[0], 0.0);
    assert!((last[1] - 1.0).abs() < 1e-6);
}

#[test]
fn missed_limit_exits_with_one() {
    // A single coarse ε cannot come within 0.1 % of the limit.
    let o = run(&[
        "sweep",
        "--form",
        "f1shrp1",
        "--n",
        "5",
        "--p",
        "2",
        "--eps-start",
        "0.8",
        "--steps",
        "1",
        "--tol",
        "1e-3",
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_io_errors_exit_with_two() {
    let o = run(&["check", "--ineq", "f3", "--n", "4", "--p", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("f3 requires p ≥ 2"));

    let o = run(&[
        "check",
        "--ineq",
        "f1",
        "--n",
        "5",
        "--p",
        "2",
        "--out",
        "/nonexistent-dir/x.json",
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot write"));
}

#[test]
fn thread_cap_does_not_change_output() {
    let args = ["check", "--ineq", "fc2", "--n", "4", "--format", "csv"];
    let one = Command::new(env!("CARGO_BIN_EXE_hardy-sphere"))
        .args(args)
        .env("HARDY_SPHERE_THREADS", "1")
        .output()
        .unwrap();
    let auto = Command::new(env!("CARGO_BIN_EXE_hardy-sphere"))
        .args(args)
        .env("HARDY_SPHERE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, auto.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_hardy-sphere"))
        .args(args)
        .env("HARDY_SPHERE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}
