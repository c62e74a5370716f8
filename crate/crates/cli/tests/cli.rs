use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn distobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distobs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The running example with a fixed gain.
fn running_with_gain(dir: &Path, g: f64) -> PathBuf {
    let text = std::fs::read_to_string(fixture("running_dwell.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["g"] = serde_json::json!(g);
    let file = dir.join(format!("running_g{g}.json"));
    std::fs::write(&file, v.to_string()).unwrap();
    file
}

#[test]
fn check_passes_on_the_fixture() {
    let o = distobs(&["check", "--scenario", path(&fixture("running_dwell.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("SUMMARY status=PASS regime=dwell"), "{out}");
    assert!(out.contains("lambda_fit=na"));
}

#[test]
fn check_fails_below_the_gain_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = distobs(&["check", "--scenario", path(&running_with_gain(dir.path(), 0.2))]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL certificate: measured 0.2"), "{out}");
    assert!(out.contains("failures=certificate"));
}

#[test]
fn simulate_writes_report_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let o = distobs(&[
        "simulate",
        "--scenario",
        path(&fixture("three_agents_average_dwell.json")),
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "PASS");
    assert_eq!(report["regime"], "average_dwell");
    assert!(report["rate"]["aggregate"]["lambda_fit"].as_f64().unwrap() >= 0.95 * 0.5);
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 100);
    assert!(csv.starts_with("t,e_1_1,"));
}

#[test]
fn simulate_reports_rate_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = distobs(&[
        "simulate",
        "--scenario",
        path(&running_with_gain(dir.path(), 0.2)),
        "--out",
        path(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL rate: measured"), "{}", stdout(&o));
}

#[test]
fn simulate_is_reproducible_and_seed_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("running_dwell.json");
    let run = |name: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["simulate", "--scenario", path(&scenario), "--out", path(&out_dir)];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let o = distobs(&args);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out_dir.join("report.json")).unwrap()
    };
    assert_eq!(run("a", None), run("b", None));
    assert_ne!(run("c", Some("9")), run("a", None));
}

#[test]
fn design_prints_the_certificate() {
    let o = distobs(&["design", "--scenario", path(&fixture("running_dwell.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("\"lambda_star\""), "{out}");
    assert!(out.contains("g_min = 4.2105"), "{out}");
}

#[test]
fn sweep_writes_one_directory_per_gain() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let o = distobs(&[
        "sweep",
        "--scenario",
        path(&fixture("running_dwell.json")),
        "--g-values",
        "0.2,6",
        "--out",
        path(&out_dir),
    ]);
    // the under-gained point fails
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("SUMMARY")).count(), 2);
    let points: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    let points = points.as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["status"], "FAIL");
    assert_eq!(points[1]["status"], "PASS");
    assert!(out_dir.join("g_000/report.json").exists());
    assert!(out_dir.join("g_001/trajectory.csv").exists());
}

#[test]
fn input_errors_exit_with_two() {
    let o = distobs(&["check", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("loading scenario"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"plant\": {\n    \"A\": [[1, 0] [0, 1]]\n  }\n}\n").unwrap();
    let o = distobs(&["check", "--scenario", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = distobs(&[
        "check",
        "--scenario",
        path(&fixture("running_dwell.json")),
        "--step",
        "-1",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}
