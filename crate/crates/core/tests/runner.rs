use std::path::Path;
use std::process::Command;

use gpbandit::runner::csvio::{rounds_from_bytes, summaries_from_bytes, CURVE_HEADER, SUMMARY_HEADER};
use gpbandit::runner::{run_suite, ExperimentConfig, Overrides};
use gpbandit::strategies::Algorithm;

const SMALL: &str = r#"{
    "objective": {"name": "dropwave", "grid": [20, 20]},
    "threshold": {"mode": "quantile", "xi": 0.05},
    "algorithms": ["gp_ucb", "pg", "ei"],
    "horizon": 5,
    "trials": 2,
    "experiments_per_trial": 2,
    "refit_every": null
}"#;

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let overrides = Overrides {
        output: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    ExperimentConfig::from_json_with(text, &overrides).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpbandit"))
}

#[test]
fn single_episode_shape() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"objective": {"name": "hartmann3"}, "threshold": {"mode": "offset_from_max", "delta": 0.5},
        "trials": 1, "experiments_per_trial": 1, "horizon": 5, "refit_every": null, "early_stop": false}"#;
    let cfg = config(text, dir.path());
    let suite = run_suite(&cfg, Some(1)).unwrap();
    assert_eq!(suite.summaries().len(), 1);
    let rows = suite.round_rows();
    assert_eq!(rows.len(), cfg.initial_design_size + 5);
    assert!(rows.len() <= 8);
    let ts: Vec<i64> = rows.iter().map(|r| r.record.t).collect();
    assert_eq!(ts, vec![-2, -1, 0, 1, 2, 3, 4, 5]);
}

#[test]
fn reruns_are_byte_identical_across_directories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_suite(&config(SMALL, a.path()), Some(1)).unwrap().write(a.path()).unwrap();
    // The second run uses the thread pool; order must not leak into output.
    let fb = run_suite(&config(SMALL, b.path()), None).unwrap().write(b.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        // The config copy records its own output directory.
        if x.file_name().unwrap() == "config.json" {
            continue;
        }
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn algorithms_share_initial_design() {
    let dir = tempfile::tempdir().unwrap();
    let suite = run_suite(&config(SMALL, dir.path()), Some(1)).unwrap();
    let rows = suite.round_rows();
    for trial in 0..2 {
        for exp in 0..2 {
            let design = |alg: Algorithm| -> Vec<Vec<f64>> {
                rows.iter()
                    .filter(|r| r.algorithm == alg && r.trial == trial && r.experiment == exp && r.record.t <= 0)
                    .map(|r| r.record.x.clone())
                    .collect()
            };
            let ucb = design(Algorithm::GpUcb);
            assert_eq!(ucb.len(), 3);
            assert_eq!(ucb, design(Algorithm::Pg));
            assert_eq!(ucb, design(Algorithm::Ei));
        }
    }
    let first = |t: usize, e: usize| rows.iter().find(|r| r.trial == t && r.experiment == e).unwrap().record.x.clone();
    assert_ne!(first(0, 0), first(0, 1));
    assert_ne!(first(0, 0), first(1, 0));
}

#[test]
fn written_files_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let suite = run_suite(&config(SMALL, dir.path()), Some(1)).unwrap();
    suite.write(dir.path()).unwrap();
    let rows = rounds_from_bytes(&std::fs::read(dir.path().join("rounds.csv")).unwrap()).unwrap();
    let summaries = summaries_from_bytes(&std::fs::read(dir.path().join("summaries.csv")).unwrap()).unwrap();
    assert_eq!(rows, suite.round_rows());
    // Summaries carry no instantaneous regret column.
    let mask = |mut v: Vec<gpbandit::runner::csvio::SummaryRow>| {
        v.iter_mut().for_each(|s| s.regret.r = 0.0);
        v
    };
    assert_eq!(mask(summaries.clone()), mask(suite.summaries()));
    assert_eq!(summaries.len(), 2 * 2 * 3);
    let summary_text = std::fs::read_to_string(dir.path().join("summaries.csv")).unwrap();
    assert_eq!(summary_text.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    let curve = std::fs::read_to_string(dir.path().join("curves_fraction_found.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), CURVE_HEADER.join(","));
    // One point per algorithm per round 1..=T.
    assert_eq!(curve.lines().count(), 1 + 3 * 5);
}

#[test]
fn config_errors_name_the_field() {
    let err = ExperimentConfig::from_json_str(r#"{"objective": {"name": "dropwave"}, "horizon": "ten"}"#).unwrap_err();
    assert!(err.to_string().contains("horizon"), "{err}");
    let err = ExperimentConfig::from_json_str(r#"{"objective": {"name": "dropwave"}, "horizn": 3}"#).unwrap_err();
    assert!(err.to_string().contains("horizn"), "{err}");
}

#[test]
fn cli_lists_objectives() {
    let out = bin().arg("list-objectives").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["dropwave", "shifted_dropwave", "hartmann3", "gp_draw", "keane"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn cli_run_then_rebuild_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--objective", "dropwave", "--acq", "pg,ei", "--T", "4", "--trials", "1", "--xi", "0.1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(listed.contains("summaries.csv"));
    let original = std::fs::read(dir.path().join("curves_fraction_found.csv")).unwrap();

    let rebuilt = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["curves", "--mode", "fraction-found", "--T", "4", "--in"])
        .arg(dir.path())
        .arg("--out")
        .arg(rebuilt.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(rebuilt.path().join("curves_fraction_found.csv")).unwrap(), original);
}

#[test]
fn cli_rejects_bad_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--objective", "dropwave", "--T", "2", "--xi", "2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("xi"));
}

#[test]
fn cli_conflicting_thresholds_are_refused() {
    let out = bin()
        .args(["run", "--objective", "dropwave", "--xi", "0.1", "--eta", "0.5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_bounds_report_is_json() {
    let out = bin()
        .args(["bounds", "--delta-gap", "0.5", "--lambda", "1", "--norm-bound", "3", "--T", "1000", "--noise", "0.1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c1 = v["c1"].as_f64().unwrap();
    let c2 = v["c2"].as_f64().unwrap();
    assert_eq!(c1, 4.0 * c2);
    assert!((c2 - 2.0 / 2f64.ln()).abs() < 1e-12);
}
