mod common;

use common::{diag, model, perception, vocab};
use onral::pomdp::{ActionKind, CostTable, HiddenState, ManipState, ObservationSym};
use onral::solver::{
    belief_update, best_action, best_action_at, evaluate_policy_exact, exact_value_oracle, solve, value, Belief, SolverConfig,
};

#[test]
fn horizon_zero_is_worth_nothing() {
    let v = vocab(1);
    let m = model(&v, 1, &perception(&v, 1, &[]), &CostTable::standard(&v));
    let b = Belief::uniform(ManipState::X1, 2);
    assert_eq!(exact_value_oracle(&m, &b, 0).unwrap(), 0.0);
}

#[test]
fn one_step_report_value() {
    let v = vocab(1);
    let m = model(&v, 1, &perception(&v, 1, &[]), &CostTable::standard(&v));
    // every exploratory action is worse than reporting with one step left
    let b = Belief::new(ManipState::X2, vec![0.7, 0.3]).unwrap();
    let got = exact_value_oracle(&m, &b, 1).unwrap();
    assert!((got - 120.0).abs() < 1e-9, "{got}");
}

#[test]
fn oracle_guard_rejects_large_problems() {
    let v = vocab(1);
    let m = model(&v, 1, &perception(&v, 1, &[]), &CostTable::standard(&v));
    let b = Belief::uniform(ManipState::X1, 2);
    assert!(exact_value_oracle(&m, &b, 11).is_err());
}

#[test]
fn bayes_update_example() {
    let v = vocab(1);
    let pm = perception(&v, 1, &[("tap", 0, [[0.8, 0.2], [0.3, 0.7]])]);
    let m = model(&v, 1, &pm, &CostTable::standard(&v));
    let tap = m.action_for_behavior(v.behavior("tap").unwrap()).unwrap();
    let b = Belief::uniform(ManipState::X1, 2);
    let nb = belief_update(&b, tap, ObservationSym::Bits(1), ManipState::X1, &m).unwrap();
    assert!((nb.hidden[0] - 0.1 / 0.45).abs() < 1e-12);
    assert!((nb.hidden[1] - 0.35 / 0.45).abs() < 1e-12);
    let report = m.report_action(HiddenState(0));
    let same = belief_update(&nb, report, ObservationSym::Null, ManipState::Term, &m).unwrap();
    assert_eq!(same.hidden, nb.hidden);
}

#[test]
fn uninformative_model_reports_immediately() {
    let v = vocab(1);
    let m = model(&v, 1, &perception(&v, 1, &[]), &CostTable::standard(&v));
    let policy = solve(&m, &SolverConfig::default()).unwrap();
    let x0 = Belief::uniform(ManipState::X0, 2);
    assert_eq!(m.action(best_action(&policy, &x0).unwrap()).kind, ActionKind::Explore(v.behavior("look").unwrap()));
    let x1 = Belief::uniform(ManipState::X1, 2);
    assert!(m.action(best_action(&policy, &x1).unwrap()).is_report());
    let oracle = exact_value_oracle(&m, &x1, 4).unwrap();
    assert!((value(&policy, &x1) - oracle).abs() < 1e-3);
}

#[test]
fn confident_belief_reports_its_mode() {
    let v = vocab(1);
    let pm = perception(&v, 1, &[("tap", 0, diag(0.99, 0.99))]);
    let m = model(&v, 1, &pm, &CostTable::standard(&v));
    let policy = solve(&m, &SolverConfig::default()).unwrap();
    let b = Belief::new(ManipState::X1, vec![0.0, 1.0]).unwrap();
    assert_eq!(best_action(&policy, &b).unwrap(), m.report_action(HiddenState(1)));
}

#[test]
fn cheap_informative_action_matches_oracle() {
    let v = vocab(1);
    let pm = perception(&v, 1, &[("tap", 0, diag(0.99, 0.99))]);
    let m = model(&v, 1, &pm, &CostTable::standard(&v));
    let policy = solve(&m, &SolverConfig::default()).unwrap();
    let b0 = Belief::uniform(ManipState::X0, 2);
    let oracle = exact_value_oracle(&m, &b0, 8).unwrap();
    let achieved = evaluate_policy_exact(&m, &policy, &b0, 8).unwrap();
    assert!((achieved - oracle).abs() < 1e-3, "policy {achieved} oracle {oracle}");
    assert!((value(&policy, &b0) - oracle).abs() < 1e-3);

    let b1 = Belief::uniform(ManipState::X1, 2);
    let tap = m.action_for_behavior(v.behavior("tap").unwrap()).unwrap();
    assert_eq!(best_action(&policy, &b1).unwrap(), tap);
}

#[test]
fn oracle_grows_with_horizon_from_reporting_states() {
    let v = vocab(1);
    let pm = perception(&v, 1, &[("tap", 0, diag(0.8, 0.7)), ("shake", 0, diag(0.9, 0.9))]);
    let m = model(&v, 1, &pm, &CostTable::standard(&v));
    for x in [ManipState::X1, ManipState::X2, ManipState::X3, ManipState::X4] {
        let b = Belief::new(x, vec![0.4, 0.6]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for h in 1..=6 {
            let val = exact_value_oracle(&m, &b, h).unwrap();
            assert!(val >= prev - 1e-9, "{x} horizon {h}: {val} < {prev}");
            prev = val;
        }
    }
}

#[test]
fn best_action_ignores_positive_rescaling() {
    let v = vocab(2);
    let pm = perception(&v, 2, &[("press", 0, diag(0.9, 0.8)), ("tap", 1, diag(0.85, 0.85))]);
    let m = model(&v, 2, &pm, &CostTable::standard(&v));
    let policy = solve(&m, &SolverConfig::default()).unwrap();
    let scaled = policy.scaled(3.5);
    for (i, x) in [ManipState::X1, ManipState::X3, ManipState::X4].into_iter().enumerate() {
        let mut h = vec![0.1, 0.2, 0.3, 0.4];
        h.rotate_left(i);
        let b = Belief::new(x, h).unwrap();
        assert_eq!(best_action(&policy, &b).unwrap(), best_action(&scaled, &b).unwrap());
    }
}

#[test]
fn solving_is_deterministic() {
    let v = vocab(2);
    let pm = perception(&v, 2, &[("press", 0, diag(0.9, 0.8)), ("tap", 1, diag(0.85, 0.85))]);
    let m = model(&v, 2, &pm, &CostTable::standard(&v));
    let a = solve(&m, &SolverConfig::default()).unwrap();
    let b = solve(&m, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}


#[test]
fn finite_horizon_policy_reaches_the_oracle() {
    let v = vocab(1);
    let pm = perception(
        &v,
        1,
        &[("tap", 0, diag(0.8, 0.7)), ("shake", 0, diag(0.9, 0.85)), ("press", 0, diag(0.95, 0.95))],
    );
    let m = model(&v, 1, &pm, &CostTable::standard(&v));
    let b0 = Belief::uniform(ManipState::X0, 2);
    for h in [2, 4, 6] {
        let cfg = SolverConfig {
            horizon: Some(h),
            ..SolverConfig::default()
        };
        let policy = solve(&m, &cfg).unwrap();
        assert_eq!(policy.horizon(), Some(h));
        let oracle = exact_value_oracle(&m, &b0, h).unwrap();
        let achieved = evaluate_policy_exact(&m, &policy, &b0, h).unwrap();
        assert!(achieved <= oracle + 1e-9);
        assert!(oracle - achieved < 1e-3, "horizon {h}: policy {achieved} oracle {oracle}");
    }
}

#[test]
fn finite_horizon_policy_has_no_action_after_its_last_step() {
    let v = vocab(1);
    let m = model(&v, 1, &perception(&v, 1, &[]), &CostTable::standard(&v));
    let cfg = SolverConfig {
        horizon: Some(3),
        ..SolverConfig::default()
    };
    let policy = solve(&m, &cfg).unwrap();
    let b = Belief::uniform(ManipState::X1, 2);
    assert!(best_action_at(&policy, &b, 0).is_err());
    // one step left: only a report can pay off
    assert!(m.action(best_action_at(&policy, &b, 1).unwrap()).is_report());
    assert!(solve(
        &m,
        &SolverConfig {
            horizon: Some(0),
            ..SolverConfig::default()
        }
    )
    .is_err());
}
