//! End-to-end checks of the command-line interface.

use std::path::Path;
use std::process::{Command, Output};

fn bellns(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellns"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_then_analyze_pr_box() {
    let dir = tempfile::tempdir().unwrap();
    let out = bellns(
        &["gen", "--family", "pr", "--n", "2", "--m", "2", "--output", "pr.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bellns(&["analyze", "pr.json", "--method", "lp"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["is_no_signalling"], true);
    assert_eq!(v["is_local"], false);
    assert_eq!(v["method"], "lp");
    assert!((v["negativity"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((v["chsh"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    // the first-order method agrees
    let out = bellns(&["analyze", "pr.json", "--method", "nesta"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["negativity"].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert_eq!(v["is_local"], false);
}

#[test]
fn analyze_white_noise_is_local() {
    let dir = tempfile::tempdir().unwrap();
    bellns(
        &["gen", "--family", "whitenoise", "--output", "wn.json"],
        dir.path(),
    );
    let out = bellns(&["analyze", "wn.json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["is_local"], true);
    assert!(v["negativity"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = bellns(&["analyze", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = bellns(&["analyze", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_pr_rejects_m3() {
    let dir = tempfile::tempdir().unwrap();
    let out = bellns(&["gen", "--family", "pr", "--m", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_mix_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    bellns(
        &["gen", "--family", "mix", "--weights", "0.5,0.25,0.25", "--seed", "7", "--output", "a.json"],
        dir.path(),
    );
    bellns(
        &["gen", "--family", "mix", "--weights", "0.5,0.25,0.25", "--seed", "7", "--output", "b.json"],
        dir.path(),
    );
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bench_writes_expected_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = bellns(
        &[
            "bench", "--n-min", "2", "--n-max", "4", "--samples", "5", "--seed", "1",
            "--methods", "nesta,lp", "--out", "bench.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(
        lines[0],
        "n,m,sample,seed,c0,c1,c2,method,negativity,ns_distance,wall_time_s,iterations,converged"
    );
    assert_eq!(lines.len() - 1, 30, "3 n-values × 5 samples × 2 methods");
    // summary JSON carries a fit per method
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rows"], 30);
    assert_eq!(v["fits"].as_array().unwrap().len(), 2);

    // identical flags reproduce identical output modulo timing columns
    let out2 = bellns(
        &[
            "bench", "--n-min", "2", "--n-max", "4", "--samples", "5", "--seed", "1",
            "--methods", "nesta,lp", "--out", "bench2.csv",
        ],
        dir.path(),
    );
    assert!(out2.status.success());
    let csv2 = std::fs::read_to_string(dir.path().join("bench2.csv")).unwrap();
    let strip = |text: &str| -> Vec<String> {
        text.trim_end()
            .lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                let mut kept = cols.clone();
                kept.remove(10); // wall_time_s
                kept.join(",")
            })
            .collect()
    };
    assert_eq!(strip(&csv), strip(&csv2));
}

#[test]
fn sweep_emits_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = bellns(
        &["sweep", "--steps", "5", "--method", "lp", "--out", "sweep.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(lines[0], "v,negativity");
    assert_eq!(lines.len() - 1, 5);
    // v = 1 row is the bare PR box
    let last: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(last[0], "1.000000");
    assert!((last[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-9);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("critical visibility"), "{stderr}");
}
