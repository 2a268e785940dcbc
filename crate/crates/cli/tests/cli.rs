use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_supobs"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/scenarios").join(name)
}

fn shipped_certificate() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/case_study_certificate.json")
}

fn exec(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(scenario("static_noiseless.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn check_shipped_certificate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(bin().args(["check", "--out"]).arg(dir.path()));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("check_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["vertex_checks"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("check_report.txt").exists());
}

#[test]
fn check_with_explicit_certificate_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(
        bin()
            .args(["check", "--audit-grid", "3", "--certificate"])
            .arg(shipped_certificate())
            .arg("--out")
            .arg(dir.path()),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn negated_p_fails_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cert: Value = serde_json::from_str(&fs::read_to_string(shipped_certificate()).unwrap()).unwrap();
    for row in cert["P"].as_array_mut().unwrap() {
        for v in row.as_array_mut().unwrap() {
            *v = Value::from(-v.as_f64().unwrap());
        }
    }
    let path = dir.path().join("neg.json");
    fs::write(&path, cert.to_string()).unwrap();
    let out = exec(bin().args(["check", "--certificate"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("positivity"), "{}", stderr(&out));
}

#[test]
fn malformed_certificate_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cert: Value = serde_json::from_str(&fs::read_to_string(shipped_certificate()).unwrap()).unwrap();
    cert["K1"] = serde_json::json!([[1.0]]);
    let path = dir.path().join("bad.json");
    fs::write(&path, cert.to_string()).unwrap();
    let out = exec(bin().args(["check", "--certificate"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("K1"), "{}", stderr(&out));
}

#[test]
fn missing_file_is_usage_error() {
    let out = exec(bin().args(["check", "--certificate", "/nonexistent/cert.json"]));
    assert_eq!(code(&out), 2);
    let out = exec(bin().args(["run", "--scenario", "/nonexistent/scenario.json"]));
    assert_eq!(code(&out), 2);
    let out = exec(bin().args(["run"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn run_static_noiseless() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(bin().args(["run", "--scenario"]).arg(scenario("static_noiseless.json")).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["entry_time"].as_u64().is_some());
    assert!(String::from_utf8_lossy(&out.stdout).contains("entry_time"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6002);
}

#[test]
fn run_dynamic_noisy_zooms_every_thousand_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(bin().args(["run", "--scenario"]).arg(scenario("dynamic_noisy.json")).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut reader = csv_rows(&dir.path().join("trace.csv"));
    let header = reader.remove(0);
    let zoom_col = header.iter().position(|h| h == "zoom").unwrap();
    let zooms: Vec<usize> = reader.iter().filter(|r| r[zoom_col] == "1").map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(zooms, vec![1000, 2000, 3000, 4000, 5000, 6000]);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn horizon_zero_writes_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "h0.json", |v| v["horizon"] = Value::from(0));
    let out = exec(bin().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "0");
}

#[test]
fn guard_breach_exits_one_with_abort_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "guard.json", |v| v["state_guard"] = Value::from(2.0));
    let out = exec(bin().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 1);
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.last().unwrap()[0], "ABORT");
}

#[test]
fn invalid_scenario_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), "bad.json", |v| v["lambda"] = Value::from(1.5));
    let out = exec(bin().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lambda"), "{}", stderr(&out));
}

#[test]
fn seed_override_changes_noisy_trace() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = exec(
            bin()
                .args(["run", "--seed", seed, "--scenario"])
                .arg(scenario("static_noisy.json"))
                .arg("--out")
                .arg(&out_dir),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(out_dir.join("trace.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}

#[test]
fn sweep_over_observer_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(
        bin()
            .env("SUPOBS_THREADS", "2")
            .args(["sweep", "--axis", "N", "--values", "2,5,10", "--scenario"])
            .arg(scenario("static_noiseless.json"))
            .arg("--out")
            .arg(dir.path()),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 4);
    for (row, n) in rows[1..].iter().zip([2.0, 5.0, 10.0]) {
        assert_eq!(row[3], "ok");
        let trailing: f64 = row[5].parse().unwrap();
        assert!(trailing <= 24.5 / n, "N = {n}: trailing {trailing}");
    }
    for i in 0..3 {
        assert!(dir.path().join(format!("metrics_{i}.json")).exists());
    }
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = exec(
        bin()
            .args(["sweep", "--axis", "lambda", "--values", "0.995", "--scenario"])
            .arg(scenario("static_noiseless.json"))
            .arg("--out")
            .arg(dir.path().join("sweep")),
    );
    assert_eq!(code(&sweep), 0, "{}", stderr(&sweep));
    let run = exec(
        bin()
            .args(["run", "--scenario"])
            .arg(scenario("static_noiseless.json"))
            .arg("--out")
            .arg(dir.path().join("run")),
    );
    assert_eq!(code(&run), 0);
    let a = fs::read_to_string(dir.path().join("sweep/metrics_0.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("run/metrics.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_records_failed_runs_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let out = exec(
        bin()
            .args(["sweep", "--axis", "alpha", "--values", "1.5,0.5", "--scenario"])
            .arg(scenario("dynamic_noiseless.json"))
            .arg("--out")
            .arg(dir.path()),
    );
    assert_eq!(code(&out), 1);
    let rows = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows[1][3], "failed");
    assert_eq!(rows[2][3], "ok");
}

#[test]
fn empty_sweep_values_are_usage_error() {
    let out = exec(
        bin()
            .args(["sweep", "--axis", "N", "--values", "", "--scenario"])
            .arg(scenario("static_noiseless.json")),
    );
    assert_eq!(code(&out), 2);
    let out = exec(bin().args(["sweep", "--axis", "N", "--scenario"]).arg(scenario("static_noiseless.json")));
    assert_eq!(code(&out), 2);
}
