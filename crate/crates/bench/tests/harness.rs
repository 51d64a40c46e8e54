use std::fs;
use std::path::Path;

use inrbench_harness::report::{leaderboard_csv, read_curve};
use inrbench_harness::runner::{load_results, run_experiment, RunOptions, RunResult};
use inrbench_harness::ExperimentConfig;

const SMALL: &str = r#"{
    "tasks": ["image_reg", {"kind": "audio_reg", "signal": {"generate": {"kind": "sinusoid_mix", "samples": 64,
              "components": [[1.0, 1.0], [4.0, 0.5]]}}}],
    "models": [{"arch": "mlp", "depth": 2, "width": 8, "activation": {"family": "tanh"}},
               {"arch": "kan", "depth": 2, "width": 4, "basis": {"family": "legendre"}}],
    "train": {"steps": 20, "batch": 256, "log_every": 5, "metric_every": 10},
    "seeds": 2,
    "seed": 11
}"#;

fn config() -> ExperimentConfig {
    ExperimentConfig::parse(SMALL).unwrap()
}

fn run_into(dir: &Path, jobs: usize, resume: bool, limit: Option<usize>) -> Vec<RunResult> {
    let opts = RunOptions { jobs: Some(jobs), resume, output: Some(dir.to_path_buf()), limit };
    run_experiment(&config(), &opts).unwrap()
}

#[test]
fn repeated_runs_give_identical_leaderboards() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_into(&tmp.path().join("a"), 1, false, None);
    let b = run_into(&tmp.path().join("b"), 1, false, None);
    assert_eq!(a.len(), 8);
    assert_eq!(leaderboard_csv(&a, false), leaderboard_csv(&b, false));
    let on_disk = fs::read_to_string(tmp.path().join("a/leaderboard.csv")).unwrap();
    assert_eq!(on_disk.lines().count(), 9);
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = run_into(&tmp.path().join("full"), 1, false, None);
    let partial = run_into(&tmp.path().join("cut"), 1, false, Some(3));
    assert_eq!(partial.len(), 3);
    let resumed = run_into(&tmp.path().join("cut"), 1, true, None);
    assert_eq!(leaderboard_csv(&resumed, false), leaderboard_csv(&full, false));
    // Results reloaded from disk carry their curves.
    for (r, f) in resumed.iter().zip(&full) {
        assert_eq!(r.loss_curve, f.loss_curve);
    }
}

#[test]
fn parallelism_does_not_change_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let one = run_into(&tmp.path().join("one"), 1, false, None);
    let four = run_into(&tmp.path().join("four"), 4, false, None);
    for (a, b) in one.iter().zip(&four) {
        assert_eq!(a.run_id, b.run_id);
        assert_eq!(a.metric_value.map(f64::to_bits), b.metric_value.map(f64::to_bits));
    }
}

#[test]
fn deleted_result_is_the_only_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("x");
    let first = run_into(&dir, 1, false, None);
    fs::remove_file(dir.join("runs/run-00002.json")).unwrap();
    let second = run_into(&dir, 1, true, None);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.metric_value, b.metric_value);
        if a.index == 2 {
            continue;
        }
        // Reloaded, not recomputed: the recorded timing is unchanged.
        assert_eq!(a.wall_time_s.to_bits(), b.wall_time_s.to_bits(), "{}", a.run_id);
    }
    assert!(dir.join("runs/run-00002.json").exists());
}

#[test]
fn curves_start_at_step_zero_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    let results = run_into(&dir, 1, false, None);
    for r in &results {
        assert_eq!(r.loss_curve[0].0, 0);
        assert_eq!(r.metric_curve[0].0, 0);
        assert_eq!(r.loss_curve.last().unwrap().0, 15);
        let disk = read_curve(&dir.join(&r.loss_curve_path)).unwrap();
        assert!(disk.iter().zip(&r.loss_curve).all(|(p, q)| p.0 == q.0 && p.1.to_bits() == q.1.to_bits()));
    }
    let loaded = load_results(&dir).unwrap();
    assert_eq!(loaded.len(), results.len());
}

#[test]
fn single_task_and_model_grid() {
    let cfg = ExperimentConfig::parse(
        r#"{"tasks": ["image_reg", "inpaint"],
            "models": [{"arch": "mlp", "depth": 2, "width": 8}, {"arch": "mlp", "depth": 2, "width": 8, "activation": {"family": "sine"}}],
            "train": {"steps": 5}, "seeds": 1}"#,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let results =
        run_experiment(&cfg, &RunOptions { output: Some(tmp.path().to_path_buf()), ..RunOptions::default() }).unwrap();
    assert_eq!(results.len(), 4);
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().next().unwrap().contains("mlp/sine/identity"));
}

#[test]
fn reloaded_results_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    let fresh = run_into(&dir, 1, false, None);
    let loaded = load_results(&dir).unwrap();
    for (a, b) in fresh.iter().zip(&loaded) {
        assert_eq!(a.metric_value.map(f64::to_bits), b.metric_value.map(f64::to_bits), "{}", a.run_id);
        for (k, v) in &a.secondary {
            assert_eq!(v.to_bits(), b.secondary[k].to_bits(), "{} {k}", a.run_id);
        }
    }
}
