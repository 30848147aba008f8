use std::path::Path;

use onral::domain::AttributeId;
use onral::harness::{
    emit_outputs, episode_log_csv, learning_curve_csv, parse_config, per_attribute_report, run_experiment,
    sweep_params, ExperimentConfig,
};

const BASE: &str = "seed = 4\nattributes = 2\nbatches = 2\neval_trials = 60\n\
    [dataset.synth]\nobjects = 12\nattributes = 2\nlevel = 0.8\n";

fn config(overrides: &[(&str, &str)]) -> ExperimentConfig {
    let pairs: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    parse_config(BASE, &pairs, Path::new(".")).unwrap()
}

#[test]
fn zero_batches_give_only_the_pretrained_point() {
    let res = run_experiment(&config(&[("batches", "0")])).unwrap();
    for r in &res.runs {
        assert_eq!(r.metrics.len(), 1);
        assert_eq!(r.metrics[0].batch, 0);
        assert_eq!(r.metrics[0].cum_cost_seconds, 0.0);
        assert!(r.episodes.is_empty());
    }
}

#[test]
fn every_agent_gets_a_curve_with_non_decreasing_cost() {
    let res = run_experiment(&config(&[])).unwrap();
    let names: Vec<&str> = res.runs.iter().map(|r| r.agent.as_str()).collect();
    assert_eq!(names, ["itrs", "random_legal", "repeated_assembly"]);
    for r in &res.runs {
        assert_eq!(r.metrics.len(), 3);
        for w in r.metrics.windows(2) {
            assert!(w[1].cum_cost_seconds >= w[0].cum_cost_seconds);
            assert_eq!(w[1].batch, w[0].batch + 1);
        }
        for m in &r.metrics {
            assert!((0.0..=1.0).contains(&m.accuracy));
        }
    }
    let csv = learning_curve_csv(&res);
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(csv.starts_with("agent,batch,cum_cost_hours,accuracy,mean_test_cost_seconds,aborted\n"));
}

#[test]
fn same_seed_writes_identical_files() {
    let cfg = config(&[]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_outputs(&run_experiment(&cfg).unwrap(), a.path(), true).unwrap();
    emit_outputs(&run_experiment(&cfg).unwrap(), b.path(), true).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "learning_curve.csv"));
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between runs");
    }
}

#[test]
fn unshaped_itrs_matches_repeated_assembly() {
    let res = run_experiment(&config(&[
        ("alpha", "0.0"),
        ("beta", "0.0"),
        ("agents", "[\"itrs\", \"repeated_assembly\"]"),
    ]))
    .unwrap();
    let (itrs, ra) = (res.run("itrs").unwrap(), res.run("repeated_assembly").unwrap());
    assert_eq!(episode_log_csv(&itrs.episodes), episode_log_csv(&ra.episodes));
    assert_eq!(itrs.metrics, ra.metrics);
}

#[test]
fn sweep_has_one_cell_per_grid_point() {
    let cfg = config(&[
        ("batches", "1"),
        ("eval_trials", "20"),
        ("sweep.alpha", "[0.0, 5.0]"),
        ("sweep.beta", "[0.0, 1.0, 10.0]"),
    ]);
    let cells = sweep_params(&cfg).unwrap();
    assert_eq!(cells.len(), 6);
    for c in &cells {
        assert!(c.error.is_none());
        assert!(c.phases.is_some());
    }
    let pairs: Vec<(f64, f64)> = cells.iter().map(|c| (c.alpha, c.beta)).collect();
    assert_eq!(pairs[0], (0.0, 0.0));
    assert_eq!(pairs[5], (5.0, 10.0));
}

#[test]
fn per_attribute_report_sorts_by_itrs_accuracy() {
    let res = run_experiment(&config(&[("batches", "1")])).unwrap();
    let (agents, rows) = per_attribute_report(&res);
    assert_eq!(agents.len(), 3);
    assert_eq!(rows.len(), res.attributes.len());
    let mut names: Vec<String> = rows.iter().map(|r| r.attribute.clone()).collect();
    names.sort();
    let mut expected: Vec<String> = res
        .attributes
        .iter()
        .map(|&p: &AttributeId| res.vocab.attribute_name(p).to_string())
        .collect();
    expected.sort();
    assert_eq!(names, expected);
    let itrs: Vec<Option<f64>> = rows.iter().map(|r| r.accuracy[0]).collect();
    for w in itrs.windows(2) {
        match (w[0], w[1]) {
            (Some(a), Some(b)) => assert!(a >= b),
            (None, Some(_)) => panic!("missing value sorted before a present one"),
            _ => {}
        }
    }
    assert!(rows.iter().flat_map(|r| &r.accuracy).all(|a| a.is_none_or(|a| (0.0..=1.0).contains(&a))));
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        ("eval_trials", "0"),
        ("query_size", "3"),
        ("agents", "[]"),
        ("agents", "[\"nope\"]"),
        ("delta", "0"),
    ] {
        assert!(run_experiment(&config(&[bad])).is_err(), "{bad:?} was accepted");
    }
    assert!(parse_config("unknown_key = 1", &[], Path::new(".")).is_err());
}
