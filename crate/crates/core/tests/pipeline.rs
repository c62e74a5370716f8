use std::path::PathBuf;

use distobs::pipeline::{self, RunOptions};
use distobs::scenario::parse_scenario;
use distobs::{load_scenario, Scenario};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn running() -> Scenario {
    load_scenario(fixture("running_dwell.json")).unwrap()
}

#[test]
fn every_fixture_passes_end_to_end() {
    for name in [
        "running_dwell.json",
        "three_agents_average_dwell.json",
        "three_agents_arbitrary.json",
    ] {
        let s = load_scenario(fixture(name)).unwrap();
        let out = pipeline::run(&s, &RunOptions::full()).unwrap();
        let r = &out.report;
        assert!(r.passed(), "{name}: {:?}", r.failures);
        assert!(r.jointly_observable);
        let rate = r.rate.as_ref().unwrap();
        assert!(rate.aggregate.lambda_fit >= 0.95 * s.lambda, "{name}");
        assert!(r.invariants.block_residual <= 1e-9);
    }
}

#[test]
fn running_example_gain_sits_above_the_hand_value() {
    let out = pipeline::run(&running(), &RunOptions::full()).unwrap();
    let r = &out.report;
    // 4 before the sampling slack; 4 / 0.95 after it
    assert!((r.g_min - 4.0 / 0.95).abs() < 1e-9, "{}", r.g_min);
    assert!((r.g - 1.2 * r.g_min).abs() < 1e-12);
    assert!(r.g_auto && r.certified);
    assert!(r.rate.as_ref().unwrap().aggregate.r_squared >= 0.98);
}

#[test]
fn written_outputs_are_byte_identical_across_runs() {
    let s = running();
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let out = pipeline::run(&s, &RunOptions::full()).unwrap();
        pipeline::write_outputs(&out, d.path()).unwrap();
    }
    for file in ["report.json", "trajectory.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,e_1_1,e_1_2,e_2_1,e_2_2,norm_e,z1_norm,z2_norm\n"));
}

#[test]
fn check_mode_writes_only_the_report() {
    let out = pipeline::run(&running(), &RunOptions::default()).unwrap();
    assert!(out.errors.is_none() && out.report.rate.is_none());
    let dir = tempfile::tempdir().unwrap();
    pipeline::write_outputs(&out, dir.path()).unwrap();
    assert!(dir.path().join("report.json").exists());
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn failing_reports_name_the_check_and_the_measurement() {
    let s = running();
    let g_min = pipeline::run(&s, &RunOptions::default()).unwrap().report.g_min;
    let opts = RunOptions {
        g: Some(0.05 * g_min),
        ..RunOptions::full()
    };
    let out = pipeline::run(&s, &opts).unwrap();
    let r = &out.report;
    assert_eq!(r.status, "FAIL");
    let checks: Vec<&str> = r.failures.iter().map(|f| f.check.as_str()).collect();
    assert!(
        checks.contains(&"certificate") && checks.contains(&"rate"),
        "{checks:?}"
    );
    let rate = r.failures.iter().find(|f| f.check == "rate").unwrap();
    assert_eq!(rate.measured, r.rate.as_ref().unwrap().aggregate.lambda_fit);
    assert!(rate.measured < rate.threshold);
    let json = serde_json::to_value(r).unwrap();
    assert_eq!(json["failures"].as_array().unwrap().len(), r.failures.len());
    assert!(r.summary_line().contains("status=FAIL"));
    assert!(r.summary_line().contains("rate"));
}

#[test]
fn seed_override_is_deterministic_and_matters() {
    let s = running();
    let with = |seed| {
        let opts = RunOptions {
            seed: Some(seed),
            ..RunOptions::full()
        };
        serde_json::to_string(&pipeline::run(&s, &opts).unwrap().report).unwrap()
    };
    assert_eq!(with(11), with(11));
    assert_ne!(with(11), with(12));
}

#[test]
fn sweep_keeps_the_order_of_the_gains() {
    let s = running();
    let gains = [0.3, 6.0, 2.0];
    let results = pipeline::sweep(&s, &RunOptions::full(), &gains);
    for (g, res) in gains.iter().zip(results) {
        assert_eq!(res.unwrap().report.g, *g);
    }
}

#[test]
fn minimal_scenario_from_the_readme_loads() {
    let text = r#"{
      "plant": { "A": [[1, 0], [0, -1]], "channels": [[[1, 0]], [[0, 1]]] },
      "graphs": [[[0, 1], [1, 0]]],
      "switching": { "kind": "dwell", "tau_D": 1.0, "seed": 1 },
      "lambda": 1.0,
      "horizon": 10.0
    }"#;
    let s = parse_scenario(text).unwrap();
    assert_eq!((s.plant.n(), s.plant.m()), (2, 2));
    assert_eq!(s.lambda_hat, 2.0);
    let out = pipeline::run(&s, &RunOptions::full()).unwrap();
    assert!(out.report.passed(), "{:?}", out.report.failures);
}
