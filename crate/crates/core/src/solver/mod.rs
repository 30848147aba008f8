//! Belief tracking, point-based value iteration and exact references.

mod belief;
mod oracle;
mod pbvi;

pub use belief::{belief_update, observation_likelihood, Belief};
pub use oracle::{
    evaluate_policy_exact, exact_value_oracle, simulate_policy, MAX_ORACLE_HIDDEN, MAX_ORACLE_HORIZON,
};
pub use pbvi::{best_action, best_action_at, solve, value, AlphaVector, Policy, SolverConfig, TIE_TOLERANCE};
