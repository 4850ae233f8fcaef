use std::fs;

use fedshield::checkpoint::{load_agent, save_agent};
use fedshield::experiment::{run_experiment, run_single, ExperimentSpec, SweepValue};
use fedshield::output::{emit_outputs, write_rounds_csv, ROUND_COLUMNS};
use fedshield_core::config::{AgentKind, DataConfig};
use fedshield_core::rng::Experiment;
use fedshield_core::SimConfig;

fn tiny() -> SimConfig {
    SimConfig {
        rounds: 4,
        training_episodes: 1,
        data: DataConfig { n_train: 600, n_val: 64, n_test: 100, mean_scale: 3.0, ..DataConfig::default() },
        ..SimConfig::default()
    }
}

fn spec(values: Vec<SweepValue>, out: &std::path::Path) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(Experiment::DirichletSweep, tiny(), out);
    s.sweep_values = values;
    s.seeds = vec![42, 43];
    s
}

#[test]
fn outputs_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(vec![SweepValue::Alpha(0.5), SweepValue::Alpha(5.0)], dir.path());
    let report = run_experiment(&s, 2);
    assert!(report.all_succeeded());
    emit_outputs(dir.path(), &report).unwrap();

    let rounds = fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    let header: Vec<&str> = rounds.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..ROUND_COLUMNS.len()], ROUND_COLUMNS);
    assert_eq!(header[ROUND_COLUMNS.len()..], (0..10).map(|i| format!("trust_{i}")).collect::<Vec<_>>());
    assert_eq!(rounds.lines().count(), 1 + 2 * 2 * 4);

    for name in ["trust_history.csv", "belief_history.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "condition,seed,round,client_id,value");
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 4 * 10);
    }
    for plot in ["accuracy", "asr", "roc_auc", "reward"] {
        let svg = fs::read_to_string(dir.path().join("plots").join(format!("{plot}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    assert!(dir.path().join("runs/alpha-0.5/seed-43/rounds.csv").exists());

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "dirichlet_sweep");
    assert_eq!(summary["conditions"].as_array().unwrap().len(), 2);
    assert_eq!(summary["conditions"][1]["condition"], "alpha=5");
    assert_eq!(summary["conditions"][1]["final_accuracy"]["n"], 2);
}

#[test]
fn failing_runs_are_reported_and_the_rest_complete() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(vec![SweepValue::Alpha(0.5), SweepValue::Alpha(-1.0)], dir.path());
    let report = run_experiment(&s, 1);
    assert!(!report.all_succeeded());
    assert_eq!(report.failures.len(), 2);
    assert!(report.failures.iter().all(|f| f.condition == "alpha=-1"));
    assert_eq!(report.conditions[0].runs.len(), 2);
    assert_eq!(report.conditions[1].summary.n_failed, 2);
    assert!(report.conditions[1].summary.final_accuracy.is_none());
    emit_outputs(dir.path(), &report).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("dirichlet_alpha"));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(vec![SweepValue::Agent(AgentKind::LinearQ), SweepValue::Agent(AgentKind::Random)], dir.path());
    let a = run_experiment(&s, 1);
    let b = run_experiment(&s, 3);
    for (x, y) in a.conditions.iter().zip(&b.conditions) {
        assert_eq!(x.runs, y.runs);
    }
}

#[test]
fn empty_run_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rounds.csv");
    write_rounds_csv(&p, &[]).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap(), format!("{}\n", ROUND_COLUMNS.join(",")));
}

#[test]
fn saved_controller_reloads_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    let (first, agent) = run_single(tiny(), None, None).unwrap();
    save_agent(&path, &agent).unwrap();
    let loaded = load_agent(&path).unwrap();
    assert_eq!(loaded, agent);
    let (again, _) = run_single(tiny(), None, Some(loaded.clone())).unwrap();
    let (again2, _) = run_single(tiny(), None, Some(loaded)).unwrap();
    assert_eq!(again, again2);
    assert_eq!(again.records.len(), first.records.len());

    fs::write(&path, r#"{"format":"something-else","version":1,"agent":null}"#).unwrap();
    assert!(load_agent(&path).is_err());
}
