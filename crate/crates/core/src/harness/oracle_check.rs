use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::{synth_generate, SynthConfig};
use crate::domain::AttributeId;
use crate::error::Result;
use crate::perception::{ConfusionMatrix, PerceptionModel};
use crate::pomdp::{construct_pomdp, CostTable, ManipState, PomdpModel, TransitionTable, DEFAULT_FAIL_PROB, DEFAULT_GAMMA};
use crate::seeding;
use crate::solver::{evaluate_policy_exact, exact_value_oracle, simulate_policy, solve, Belief, SolverConfig};

/// Random single-attribute models: every behavior gets confusion diagonals
/// drawn from `diag` and a cost drawn from [0.5, 22].
pub fn random_models(count: usize, diag: (f64, f64), seed: u64) -> Result<Vec<PomdpModel>> {
    let vocab = synth_generate(&SynthConfig {
        trials_per_behavior: 1,
        ..SynthConfig::uniform(3, 1, 0.0, seed)
    })?
    .vocab()
    .clone();
    let p = AttributeId(0);
    let table = TransitionTable::standard(&vocab, DEFAULT_FAIL_PROB)?;
    (0..count)
        .map(|i| {
            let mut rng = seeding::rng(seed, &[seeding::STREAM_SOLVER, 7, i as u64]);
            let mut perception = PerceptionModel::uninformed(&vocab, &[p]);
            let mut costs = CostTable::standard(&vocab);
            for b in vocab.all_behaviors() {
                let d0 = rng.random_range(diag.0..=diag.1);
                let d1 = rng.random_range(diag.0..=diag.1);
                perception.set_theta(ConfusionMatrix::from_rows(p, b, [[d0, 1.0 - d0], [1.0 - d1, d1]])?);
                costs.set(b, rng.random_range(0.5..=22.0))?;
            }
            construct_pomdp(&[p], &perception, &costs, &table, None, DEFAULT_GAMMA)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub oracle: f64,
    /// Exact value of the solved policy over the same horizon.
    pub policy_exact: f64,
    pub simulated_mean: f64,
    pub simulated_se: f64,
}

impl OracleCase {
    pub fn within_two_se(&self) -> bool {
        (self.simulated_mean - self.oracle).abs() <= 2.0 * self.simulated_se
    }

    pub fn below_oracle(&self, tol: f64) -> bool {
        self.policy_exact <= self.oracle + tol
    }
}

/// Solves each model for `horizon` steps and compares the policy against the
/// exact optimum from the uniform belief in x0.
pub fn oracle_check(models: &[PomdpModel], horizon: usize, rollouts: usize, seed: u64) -> Result<Vec<OracleCase>> {
    models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let cfg = SolverConfig {
                horizon: Some(horizon),
                ..SolverConfig::default()
            };
            let policy = solve(m, &cfg)?;
            let b0 = Belief::uniform(ManipState::X0, m.n_hidden());
            let oracle = exact_value_oracle(m, &b0, horizon)?;
            let policy_exact = evaluate_policy_exact(m, &policy, &b0, horizon)?;
            let (simulated_mean, simulated_se) =
                simulate_policy(m, &policy, &b0, horizon, rollouts, seeding::derive(seed, &[i as u64]))?;
            Ok(OracleCase {
                oracle,
                policy_exact,
                simulated_mean,
                simulated_se,
            })
        })
        .collect()
}
