#![allow(dead_code)]

use std::sync::Arc;

use onral::dataset::{synth_generate, SynthConfig};
use onral::domain::{AttributeId, Vocabulary};
use onral::perception::{ConfusionMatrix, PerceptionModel};
use onral::pomdp::{construct_pomdp, CostTable, PomdpModel, TransitionTable, DEFAULT_FAIL_PROB, DEFAULT_GAMMA};

/// Vocabulary with the standard ten behaviors and seventeen contexts.
pub fn vocab(n_attrs: usize) -> Arc<Vocabulary> {
    synth_generate(&SynthConfig {
        trials_per_behavior: 1,
        ..SynthConfig::uniform(3, n_attrs, 0.0, 0)
    })
    .unwrap()
    .vocab()
    .clone()
}

pub fn attrs(n: usize) -> Vec<AttributeId> {
    (0..n).map(AttributeId::from).collect()
}

/// Perception with uniform matrices except the given
/// (behavior, attribute index, [[tn, fp], [fn, tp]]) overrides.
pub fn perception(v: &Vocabulary, n: usize, overrides: &[(&str, usize, [[f64; 2]; 2])]) -> PerceptionModel {
    let mut pm = PerceptionModel::uninformed(v, &attrs(n));
    for &(b, p, rows) in overrides {
        let b = v.behavior(b).unwrap();
        pm.set_theta(ConfusionMatrix::from_rows(AttributeId::from(p), b, rows).unwrap());
    }
    pm
}

pub fn model(v: &Vocabulary, n: usize, pm: &PerceptionModel, costs: &CostTable) -> PomdpModel {
    construct_pomdp(
        &attrs(n),
        pm,
        costs,
        &TransitionTable::standard(v, DEFAULT_FAIL_PROB).unwrap(),
        None,
        DEFAULT_GAMMA,
    )
    .unwrap()
}

pub fn diag(d0: f64, d1: f64) -> [[f64; 2]; 2] {
    [[d0, 1.0 - d0], [1.0 - d1, d1]]
}
