//! Brute-force references for small models.

use std::collections::HashMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::pomdp::{HiddenState, ManipState, ObservationSym, PomdpModel};
use crate::seeding;

use super::belief::{belief_update, observation_likelihood, Belief};
use super::pbvi::{best_action_at, Policy};

pub const MAX_ORACLE_HORIZON: usize = 10;
pub const MAX_ORACLE_HIDDEN: usize = 8;

type Key = (ManipState, usize, Vec<i64>);

fn key(b: &Belief, h: usize) -> Key {
    (b.manip, h, b.hidden.iter().map(|p| (p * 1e10).round() as i64).collect())
}

fn guard(model: &PomdpModel, b: &Belief, horizon: usize) -> Result<()> {
    if horizon > MAX_ORACLE_HORIZON || model.n_hidden() > MAX_ORACLE_HIDDEN {
        return Err(Error::Solver(format!(
            "oracle limited to horizon <= {MAX_ORACLE_HORIZON} and at most {MAX_ORACLE_HIDDEN} hidden states"
        )));
    }
    if b.hidden.len() != model.n_hidden() {
        return Err(Error::Belief("belief does not match model".into()));
    }
    Ok(())
}

/// Successor beliefs of (b, a) with their probabilities.
fn successors(model: &PomdpModel, b: &Belief, a: usize) -> Result<Vec<(f64, Belief)>> {
    let mut out = Vec::new();
    for &(x2, p) in model.manip_transition(b.manip, a) {
        if p == 0.0 || x2 == ManipState::Term {
            continue;
        }
        for z in 0..model.n_observations() {
            let zs = ObservationSym::from_index(z, model.n_hidden());
            let pz = observation_likelihood(b, a, zs, model);
            if pz <= 0.0 {
                continue;
            }
            out.push((p * pz, belief_update(b, a, zs, x2, model)?));
        }
    }
    Ok(out)
}

fn expected_reward(model: &PomdpModel, b: &Belief, a: usize) -> f64 {
    b.dot(model.reward_vector(b.manip, a))
}

/// Optimal expected discounted reward over `horizon` steps, by exhaustive
/// belief-tree search.
pub fn exact_value_oracle(model: &PomdpModel, b: &Belief, horizon: usize) -> Result<f64> {
    guard(model, b, horizon)?;
    fn rec(model: &PomdpModel, b: &Belief, h: usize, memo: &mut HashMap<Key, f64>) -> Result<f64> {
        if h == 0 || b.manip == ManipState::Term {
            return Ok(0.0);
        }
        let k = key(b, h);
        if let Some(&v) = memo.get(&k) {
            return Ok(v);
        }
        let mut best = f64::NEG_INFINITY;
        for &a in model.legal(b.manip) {
            let mut v = expected_reward(model, b, a);
            if !model.action(a).is_report() {
                for (p, nb) in successors(model, b, a)? {
                    v += model.gamma() * p * rec(model, &nb, h - 1, memo)?;
                }
            }
            best = best.max(v);
        }
        memo.insert(k, best);
        Ok(best)
    }
    rec(model, b, horizon, &mut HashMap::new())
}

/// Exact expected discounted reward of following `policy` for `horizon`
/// steps from `b`.
pub fn evaluate_policy_exact(model: &PomdpModel, policy: &Policy, b: &Belief, horizon: usize) -> Result<f64> {
    guard(model, b, horizon)?;
    fn rec(
        model: &PomdpModel,
        policy: &Policy,
        b: &Belief,
        h: usize,
        memo: &mut HashMap<Key, f64>,
    ) -> Result<f64> {
        if h == 0 || b.manip == ManipState::Term {
            return Ok(0.0);
        }
        let k = key(b, h);
        if let Some(&v) = memo.get(&k) {
            return Ok(v);
        }
        let a = best_action_at(policy, b, h)?;
        let mut v = expected_reward(model, b, a);
        if !model.action(a).is_report() {
            for (p, nb) in successors(model, b, a)? {
                v += model.gamma() * p * rec(model, policy, &nb, h - 1, memo)?;
            }
        }
        memo.insert(k, v);
        Ok(v)
    }
    rec(model, policy, b, horizon, &mut HashMap::new())
}

/// Monte Carlo estimate of the policy's discounted return truncated at
/// `horizon` steps. Returns (mean, standard error).
pub fn simulate_policy(
    model: &PomdpModel,
    policy: &Policy,
    b0: &Belief,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if rollouts < 2 {
        return Err(Error::Config("need at least two rollouts".into()));
    }
    let sample = |probs: &mut dyn Iterator<Item = f64>, rng: &mut seeding::Rng| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in probs.enumerate() {
            if p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last
    };
    let mut returns = Vec::with_capacity(rollouts);
    for r in 0..rollouts {
        let mut rng = seeding::rng(seed, &[seeding::STREAM_EVAL, r as u64]);
        let y = HiddenState(sample(&mut b0.hidden.iter().copied(), &mut rng));
        let mut b = b0.clone();
        let mut total = 0.0;
        let mut disc = 1.0;
        for step in 0..horizon {
            if b.manip == ManipState::Term {
                break;
            }
            let a = best_action_at(policy, &b, horizon - step)?;
            total += disc * model.reward(b.manip, y, a);
            disc *= model.gamma();
            let outs = model.manip_transition(b.manip, a);
            let x2 = outs[sample(&mut outs.iter().map(|o| o.1), &mut rng)].0;
            if x2 == ManipState::Term {
                b.manip = x2;
                continue;
            }
            let z = sample(&mut model.observation_row(a, y).iter().copied(), &mut rng);
            b = belief_update(&b, a, ObservationSym::from_index(z, model.n_hidden()), x2, model)?;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
