//! End-to-end smoke tests of the command-line interface: every subcommand on
//! a tiny workload, plus the error paths that must fail loudly instead of
//! writing a wrong report.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efit"))
}

/// Per-process temp path so parallel test runs never collide.
fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("efit-cli-{}-{name}", std::process::id()))
}

#[test]
fn table_subcommand_writes_the_report_csv() {
    let out = tmp("t1.csv");
    let res = bin()
        .args(["table", "--id", "1", "--max-n", "0", "--out"])
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(String::from_utf8_lossy(&res.stdout).contains("2 rows"));

    let text = std::fs::read_to_string(&out).expect("report written");
    let _ = std::fs::remove_file(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,dt,scheme,sol_err,order,err1,err2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2, "one ladder entry per scheme");
    assert!(rows.iter().any(|l| l.contains(",classic,")));
    assert!(rows.iter().any(|l| l.contains(",ef,")));
}

#[test]
fn run_subcommand_honors_the_config_file() {
    let cfg = tmp("cfg.json");
    let out = tmp("run.csv");
    std::fs::write(
        &cfg,
        r#"{
            "problem": "advection", "scheme": "ef", "omega": 5.0,
            "domain": [-1.0, 1.0], "m": 41, "dt_list": [0.1, 0.05],
            "t0": 0.0, "t_end": 0.3, "initial_condition": {"id": "sin"}
        }"#,
    )
    .expect("config written");
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .expect("binary runs");
    let _ = std::fs::remove_file(&cfg);
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );

    let text = std::fs::read_to_string(&out).expect("report written");
    let _ = std::fs::remove_file(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,dt,scheme,sol_err,order,err1,err2");
    assert_eq!(lines.len(), 3, "header plus one row per dt entry");
    assert!(lines[1..].iter().all(|l| l.contains(",ef,")));
}

#[test]
fn demo_subcommand_dumps_field_and_drift_summaries() {
    let out = tmp("demo.csv");
    let res = bin()
        .args(["demo", "--problem", "mkdv", "--xi", "0.7"])
        .args(["--dx", "0.1", "--dt", "0.01", "--t-end", "0.1", "--out"])
        .arg(&out)
        .output()
        .expect("binary runs");
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );

    let field = std::fs::read_to_string(&out).expect("field dump written");
    let _ = std::fs::remove_file(&out);
    let drift_path = out.with_extension("drift.csv");
    let drift = std::fs::read_to_string(&drift_path).expect("drift summary written");
    let _ = std::fs::remove_file(&drift_path);

    let field_lines: Vec<&str> = field.lines().collect();
    assert_eq!(field_lines[0], "t,x,u");
    // 11 time levels (initial state plus 10 steps) on an 80-node grid.
    assert_eq!(field_lines.len(), 1 + 11 * 80);
    let drift_lines: Vec<&str> = drift.lines().collect();
    assert_eq!(drift_lines[0], "t,x_peak,mean_x_peak");
    assert_eq!(drift_lines.len(), 1 + 11);
}

#[test]
fn check_subcommand_reports_all_green() {
    let res = bin().arg("check").output().expect("binary runs");
    assert!(
        res.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&res.stderr)
    );
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("checks passed"), "stdout: {stdout}");
    assert!(!stdout.contains("FAIL"), "stdout: {stdout}");
}

#[test]
fn bad_inputs_fail_loudly() {
    let res = bin()
        .args(["table", "--id", "9", "--out", "unused.csv"])
        .output()
        .expect("runs");
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("1..=4"));

    // A step that does not divide the time window is a config error, not a
    // silently shortened run.
    let cfg = tmp("bad-dt.json");
    std::fs::write(
        &cfg,
        r#"{
            "problem": "advection", "scheme": "ef", "omega": 5.0,
            "domain": [-1.0, 1.0], "m": 41, "dt_list": [0.07],
            "t0": 0.0, "t_end": 0.3, "initial_condition": {"id": "sin"}
        }"#,
    )
    .expect("config written");
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out", "unused.csv"])
        .output()
        .expect("runs");
    let _ = std::fs::remove_file(&cfg);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("divide"));

    // Initial data belonging to a different problem.
    let cfg = tmp("bad-ic.json");
    std::fs::write(
        &cfg,
        r#"{
            "problem": "advection", "scheme": "ef", "omega": 5.0,
            "domain": [-1.0, 1.0], "m": 41, "dt_list": [0.1],
            "t0": 0.0, "t_end": 0.3,
            "initial_condition": {"id": "mkdv_breather", "xi": 1.0}
        }"#,
    )
    .expect("config written");
    let res = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out", "unused.csv"])
        .output()
        .expect("runs");
    let _ = std::fs::remove_file(&cfg);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("does not fit"));
}
