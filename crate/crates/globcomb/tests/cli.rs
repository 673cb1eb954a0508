//! End-to-end checks of the command-line interface: exit codes, output
//! files, determinism, and config-file precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use globcomb::spf::fixture::{dense_panel, write_panel_csvs};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_globcomb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn globcomb")
}

fn write_fixture(dir: &Path, seed: u64) -> (PathBuf, PathBuf, Vec<String>) {
    let panel = dense_panel(4, 24, 2, seed).unwrap();
    let f = dir.join("forecasts.csv");
    let a = dir.join("actuals.csv");
    write_panel_csvs(&panel, &f, &a).unwrap();
    (f, a, panel.periods().to_vec())
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("o1");
    let out2 = dir.path().join("o2");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--p".into(),
            "8".into(),
            "--t".into(),
            "12".into(),
            "--m".into(),
            "2".into(),
            "--alpha".into(),
            "1".into(),
            "--reps".into(),
            "2".into(),
            "--scheme".into(),
            "optimal".into(),
            "--seed".into(),
            "7".into(),
            "--out-dir".into(),
            out.display().to_string(),
        ]
    };
    let r1 = bin().args(args(&out1)).output().unwrap();
    assert!(r1.status.success(), "stderr: {}", String::from_utf8_lossy(&r1.stderr));
    let r2 = bin().args(args(&out2)).output().unwrap();
    assert!(r2.status.success());
    for name in ["sim_rows.csv", "sim_summary.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} not byte-identical across reruns");
        assert!(a.starts_with(b"# "), "{name} missing config comment line");
    }
}

#[test]
fn simulate_rejects_bad_alpha() {
    let out = run(&["simulate", "--alpha", "1.5", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn path_gamma_zero_rows_are_one() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, periods) = write_fixture(dir.path(), 31);
    let out = run(&[
        "path",
        "--forecasts",
        f.to_str().unwrap(),
        "--actuals",
        a.to_str().unwrap(),
        "--train-end",
        &periods[15],
        "--test-start",
        &periods[16],
        "--test-end",
        &periods[23],
        "--gamma-grid",
        "1,10",
        "--lambda",
        "0.1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let zero_rows: Vec<&str> = text.lines().filter(|l| l.contains(",0,")).collect();
    assert_eq!(zero_rows.len(), 2); // one per task
    for row in zero_rows {
        assert!(row.ends_with(",1"), "gamma=0 row not exactly 1: {row}");
    }
    assert!(text.contains(",inf,"), "missing gamma=inf rows");
}

#[test]
fn path_missing_input_exits_one() {
    let out = run(&[
        "path",
        "--forecasts",
        "/nonexistent/f.csv",
        "--actuals",
        "/nonexistent/a.csv",
        "--train-end",
        "1999-Q1",
        "--test-start",
        "1999-Q2",
        "--test-end",
        "1999-Q3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/f.csv"), "stderr: {stderr}");
}

#[test]
fn evaluate_local_identical_across_groupings() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, periods) = write_fixture(dir.path(), 41);
    let common = |grouping: &str, out: &Path| {
        run(&[
            "evaluate",
            "--forecasts",
            f.to_str().unwrap(),
            "--actuals",
            a.to_str().unwrap(),
            "--train-end",
            &periods[15],
            "--test-start",
            &periods[16],
            "--test-end",
            &periods[23],
            "--scheme",
            "optimal",
            "--mode",
            "local",
            "--grouping",
            grouping,
            "--out-dir",
            out.to_str().unwrap(),
        ])
    };
    let o1 = dir.path().join("g1");
    let o2 = dir.path().join("g2");
    let r1 = common("all", &o1);
    assert!(r1.status.success(), "stderr: {}", String::from_utf8_lossy(&r1.stderr));
    let r2 = common("custom:0|1", &o2);
    assert!(r2.status.success());
    // grouping is irrelevant to local mode: identical metric values
    let read_metrics = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p.join("eval_summary.csv"))
            .unwrap()
            .lines()
            .skip(2)
            .map(|l| l.splitn(4, ',').nth(3).unwrap().to_string())
            .collect()
    };
    assert_eq!(read_metrics(&o1), read_metrics(&o2));
}

#[test]
fn combine_equal_scheme_gives_uniform_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, _) = write_fixture(dir.path(), 51);
    let out = run(&[
        "combine",
        "--forecasts",
        f.to_str().unwrap(),
        "--actuals",
        a.to_str().unwrap(),
        "--scheme",
        "equal",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let w: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((w - 0.25).abs() < 1e-12, "weight {w}");
        rows += 1;
    }
    assert_eq!(rows, 2 * 4); // tasks x forecasters
}

#[test]
fn combine_optimal_equal_weights_are_discrete() {
    let dir = tempfile::tempdir().unwrap();
    let (f, a, _) = write_fixture(dir.path(), 61);
    let out = run(&[
        "combine",
        "--forecasts",
        f.to_str().unwrap(),
        "--actuals",
        a.to_str().unwrap(),
        "--scheme",
        "optimal-equal",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let mut by_task: std::collections::HashMap<String, Vec<f64>> = Default::default();
    for line in text.lines().skip(2) {
        let mut parts = line.split(',');
        let task = parts.next().unwrap().to_string();
        let w: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        by_task.entry(task).or_default().push(w);
    }
    for (task, ws) in by_task {
        let total: f64 = ws.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{task}: weights sum to {total}");
        let s = ws.iter().filter(|&&w| w > 1e-9).count();
        for &w in &ws {
            assert!(
                w.abs() < 1e-9 || (w - 1.0 / s as f64).abs() < 1e-9,
                "{task}: weight {w} not in {{0, 1/{s}}}"
            );
        }
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "p=8\nt=12\nm=2\nalpha=1.5\nreps=1\nscheme=optimal\n").unwrap();
    // config alpha is invalid; the flag overrides it
    let ok = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "1",
        "--seed",
        "3",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(ok.status.success(), "stderr: {}", String::from_utf8_lossy(&ok.stderr));
    // without the flag, the config value is used and rejected
    let bad = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out-dir",
        dir.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "bogus_key=1\n").unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}
