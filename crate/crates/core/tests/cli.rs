use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn w1test(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_w1test"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = w1test(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    w1test(dir, args).status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(d, &["simulate", "--model", "ma3", "--n", "1000", "--traj", "100", "--seed", "7", "--out", out]);
    }
    let a = fs::read(d.join("a/series.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/series.csv")).unwrap());
    let rows = String::from_utf8(a).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 100);
}

#[test]
fn pendulum_writes_one_file_per_observable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--model", "pendulum", "--traj", "2", "--steps", "500", "--burn-in", "100", "--out", "p"]);
    for obs in ["theta1", "omega1", "theta2", "omega2"] {
        let text = fs::read_to_string(d.join(format!("p/{obs}.csv"))).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].split(',').count(), 400);
    }
}

#[test]
fn model_kernel_has_positive_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["kernel", "--source", "model", "--model", "ma3", "--grid-size", "101", "--out", "k"]);
    let text = fs::read_to_string(d.join("k/kernel.csv")).unwrap();
    assert!(text.contains("# source=model"));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 102);
        assert!(row[j + 1] > 0.0);
    }
}

#[test]
fn identical_series_are_accepted_and_bonferroni_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--model", "ma3", "--n", "300", "--traj", "20", "--seed", "3", "--out", "s"]);
    ok(d, &["kernel", "--source", "model", "--model", "ma3", "--grid-size", "41", "--out", "k"]);
    // rows are numbered across files, so series 0 and 20 are the same data
    ok(d, &[
        "test", "--data", "s/series.csv", "s/series.csv", "--kernel", "k/kernel.csv", "--pairs", "0-20",
        "--draws", "2000", "--out", "same",
    ]);
    let same = json(&d.join("same/result.json"));
    let r = &same["results"][0]["result"];
    assert_eq!(r["statistic"].as_f64().unwrap(), 0.0);
    assert_eq!(r["reject"], Value::Bool(false));

    let pairs = (0..10).map(|i| format!("{}-{}", 2 * i, 2 * i + 1)).collect::<Vec<_>>().join(",");
    ok(d, &["test", "--data", "s/series.csv", "--kernel", "k/kernel.csv", "--pairs", &pairs, "--draws", "2000", "--out", "ten"]);
    let ten = json(&d.join("ten/result.json"));
    assert!((ten["bonferroni_alpha"].as_f64().unwrap() - 0.005).abs() < 1e-15);
    assert_eq!(ten["results"].as_array().unwrap().len(), 10);
    for r in ten["results"].as_array().unwrap() {
        assert!((r["result"]["alpha"].as_f64().unwrap() - 0.005).abs() < 1e-15);
    }
}

#[test]
fn shifted_data_is_rejected_by_one_sample_test() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--model", "ma3", "--n", "2000", "--traj", "1", "--mean", "0.5", "--seed", "5", "--out", "s"]);
    ok(d, &["kernel", "--source", "model", "--model", "ma3", "--out", "k"]);
    ok(d, &[
        "test", "--mode", "one-sample", "--data", "s/series.csv", "--kernel", "k/kernel.csv",
        "--target", "normal:0,1.2489995996796797", "--draws", "4000", "--out", "t",
    ]);
    let r = json(&d.join("t/result.json"));
    let text = r.to_string();
    assert!(text.contains("\"reject\":true"), "{text}");
}

#[test]
fn hac_refuses_sorted_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let row: Vec<String> = (0..200).map(|i| format!("{}", i as f64 / 10.0)).collect();
    fs::write(d.join("sorted.csv"), format!("{}\n{}\n", row.join(","), row.join(","))).unwrap();
    assert_eq!(code(d, &["kernel", "--source", "hac", "--data", "sorted.csv", "--out", "k"]), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["simulate", "--model", "garch"]), 2);
    assert_eq!(code(d, &["test", "--data", "missing.csv", "--kernel", "missing.csv"]), 2);
    assert_eq!(code(d, &["limit", "--kernel", "missing.csv"]), 2);
    fs::write(d.join("bad.json"), r#"{"model":"ma3","n":10,"trajectories":4}"#).unwrap();
    assert_eq!(code(d, &["simulate", "--config", "bad.json"]), 2);
    fs::write(d.join("good.json"), r#"{"model":"ma3","n":10,"traj":4}"#).unwrap();
    assert_eq!(code(d, &["simulate", "--config", "good.json", "--out", "g"]), 0);
    let steps = ["simulate", "--model", "pendulum", "--dt", "0.2", "--steps", "1000", "--traj", "1", "--burn-in", "0"];
    assert_eq!(code(d, &steps), 3);
}

#[test]
fn histogram_counts_match_totals() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["experiment", "ma3", "--null", "--n", "200", "--pairs", "40", "--draws", "1500", "--bins", "20", "--out", "e"]);
    let text = fs::read_to_string(d.join("e/histograms.csv")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (stat, lim) = (col("statistic_count"), col("limit_count"));
    let (mut s, mut l) = (0u64, 0u64);
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        s += f[stat].parse::<u64>().unwrap();
        l += f[lim].parse::<u64>().unwrap();
    }
    assert_eq!((s, l), (40, 1500));
    let table = fs::read_to_string(d.join("e/table.csv")).unwrap();
    assert!(table.contains("case,observable,n,alpha=0.01"));
}
