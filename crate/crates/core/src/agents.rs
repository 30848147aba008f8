//! The three exploration strategies and the per-agent learning state they
//! share.

use std::collections::HashMap;
use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::domain::{AttributeId, Query};
use crate::error::{Error, Result};
use crate::itrs::{
    episode_feedback, mean_experience, run_episode, Controller, EpisodeRecord, ExperienceLedger, FeedbackMode,
    PolicyController, ShapingParams,
};
use crate::perception::{PerceptionConfig, PerceptionModel};
use crate::pomdp::{construct_pomdp, CostTable, ManipState, PomdpModel, ShapingInputs, TransitionTable};
use crate::seeding::{self, Rng};
use crate::solver::{solve, Belief, Policy, SolverConfig};

/// Reporting deadlines in cost-seconds, indexed by query size − 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetTable(pub Vec<f64>);

impl Default for BudgetTable {
    fn default() -> Self {
        BudgetTable(vec![50.0, 80.0, 110.0])
    }
}

impl BudgetTable {
    pub fn get(&self, n: usize) -> Result<f64> {
        n.checked_sub(1)
            .and_then(|i| self.0.get(i))
            .copied()
            .ok_or_else(|| Error::Config(format!("no exploration budget configured for {n}-attribute queries")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentKind {
    Itrs(ShapingParams),
    RandomLegal(BudgetTable),
    RepeatedAssembly,
}

impl AgentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AgentKind::Itrs(_) => "itrs",
            AgentKind::RandomLegal(_) => "random_legal",
            AgentKind::RepeatedAssembly => "repeated_assembly",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Fixed experiment-wide machinery every agent uses identically.
#[derive(Debug, Clone)]
pub struct Environment<'w> {
    pub world: &'w Dataset,
    pub costs: CostTable,
    pub transitions: TransitionTable,
    pub gamma: f64,
    pub solver: SolverConfig,
    pub perception: PerceptionConfig,
    pub feedback: FeedbackMode,
}

/// Random Legal's choice: a uniformly random exploratory action until the
/// budget is spent, then the report of the most likely hidden state (lowest
/// index on ties). Reports are illegal in x0, so an exhausted budget there
/// still explores.
pub fn random_legal_step(
    model: &PomdpModel,
    b: &Belief,
    elapsed: f64,
    budget: f64,
    rng: &mut Rng,
) -> Result<usize> {
    if b.manip == ManipState::Term {
        return Err(Error::Model("no action is legal in term".into()));
    }
    let legal = model.legal(b.manip);
    let explore: Vec<usize> = legal.iter().copied().filter(|&a| !model.action(a).is_report()).collect();
    let can_report = legal.len() > explore.len();
    if elapsed < budget || !can_report {
        if explore.is_empty() {
            return Err(Error::Model(format!("no exploratory action is legal in {}", b.manip)));
        }
        return Ok(explore[rng.random_range(0..explore.len())]);
    }
    Ok(model.report_action(b.argmax()))
}

pub struct RandomLegalController {
    pub budget: f64,
}

impl Controller for RandomLegalController {
    fn choose(&mut self, belief: &Belief, elapsed: f64, model: &PomdpModel, rng: &mut Rng) -> Result<usize> {
        random_legal_step(model, belief, elapsed, self.budget, rng)
    }
}

/// Builds the query's POMDP from a trained perception model. Shaping terms
/// are included only when `shaping` is given.
pub fn build_query_model(
    attributes: &[AttributeId],
    perception: &PerceptionModel,
    ledger: &ExperienceLedger,
    shaping: Option<ShapingParams>,
    env: &Environment<'_>,
) -> Result<PomdpModel> {
    let inputs = shaping.map(|params| ShapingInputs {
        params,
        ie_mean: env
            .world
            .vocab()
            .all_behaviors()
            .map(|b| mean_experience(attributes, b, ledger))
            .collect(),
    });
    construct_pomdp(
        attributes,
        perception,
        &env.costs,
        &env.transitions,
        inputs.as_ref(),
        env.gamma,
    )
}

fn solver_for(attributes: &[AttributeId], env: &Environment<'_>) -> SolverConfig {
    let tags: Vec<u64> = attributes.iter().map(|a| u64::from(a.0)).collect();
    SolverConfig {
        seed: seeding::derive(env.solver.seed, &tags),
        ..env.solver
    }
}

/// Confusion matrices, unshaped model and solved policy from the current
/// dataset.
pub fn repeated_assembly_rebuild(
    dataset: &Dataset,
    query: &Query,
    env: &Environment<'_>,
) -> Result<(PerceptionModel, PomdpModel, Policy)> {
    let perception = PerceptionModel::train(dataset, &query.attributes, &env.perception)?;
    let model = build_query_model(&query.attributes, &perception, &ExperienceLedger::default(), None, env)?;
    let policy = solve(&model, &solver_for(&query.attributes, env))?;
    Ok((perception, model, policy))
}

/// A query's model and, for planning agents, its policy.
#[derive(Debug, Clone)]
pub struct Plan {
    pub model: PomdpModel,
    pub policy: Option<Policy>,
}

/// Everything one agent learns: its own copy of the dataset, experience
/// ledger, perception models and the plans derived from them.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub kind: AgentKind,
    pub dataset: Dataset,
    pub ledger: ExperienceLedger,
    pub perception: PerceptionModel,
    attributes: Vec<AttributeId>,
    plans: HashMap<Vec<AttributeId>, Plan>,
}

impl AgentState {
    pub fn new(
        kind: AgentKind,
        dataset: Dataset,
        ledger: ExperienceLedger,
        attributes: &[AttributeId],
        env: &Environment<'_>,
    ) -> Result<Self> {
        let perception = PerceptionModel::train(&dataset, attributes, &env.perception)?;
        Ok(AgentState {
            kind,
            dataset,
            ledger,
            perception,
            attributes: attributes.to_vec(),
            plans: HashMap::new(),
        })
    }

    /// Retrains perception from the current dataset and drops stale plans.
    pub fn refresh(&mut self, env: &Environment<'_>) -> Result<()> {
        self.perception = PerceptionModel::train(&self.dataset, &self.attributes, &env.perception)?;
        self.plans.clear();
        Ok(())
    }

    /// Builds (and solves, where needed) the plans for every listed query
    /// attribute set, in parallel.
    pub fn prepare(&mut self, queries: &[Vec<AttributeId>], env: &Environment<'_>) -> Result<()> {
        let todo: Vec<&Vec<AttributeId>> = queries.iter().filter(|q| !self.plans.contains_key(*q)).collect();
        let built: Vec<(Vec<AttributeId>, Plan)> = todo
            .par_iter()
            .map(|attrs| self.build_plan(attrs, env).map(|p| ((*attrs).clone(), p)))
            .collect::<Result<_>>()?;
        self.plans.extend(built);
        Ok(())
    }

    fn build_plan(&self, attributes: &[AttributeId], env: &Environment<'_>) -> Result<Plan> {
        let shaping = match &self.kind {
            AgentKind::Itrs(p) => Some(*p),
            _ => None,
        };
        let model = build_query_model(attributes, &self.perception, &self.ledger, shaping, env)?;
        let policy = match self.kind {
            AgentKind::RandomLegal(_) => None,
            _ => Some(solve(&model, &solver_for(attributes, env))?),
        };
        Ok(Plan { model, policy })
    }

    pub fn plan(&self, attributes: &[AttributeId]) -> Option<&Plan> {
        self.plans.get(attributes)
    }

    /// Runs one episode with the agent's frozen plan. Does not learn.
    pub fn run_trial(&self, query: &Query, env: &Environment<'_>, rng: &mut Rng) -> Result<EpisodeRecord> {
        agent_run_trial(self, query, env, rng)
    }

    /// Labels and stores an episode's data; models change only on the next
    /// [`refresh`](Self::refresh).
    pub fn learn(&mut self, record: &EpisodeRecord, env: &Environment<'_>) -> Result<usize> {
        episode_feedback(record, env.world, &mut self.dataset, &mut self.ledger, env.feedback)
    }
}

/// Dispatches one trial to the agent's strategy.
pub fn agent_run_trial(
    agent: &AgentState,
    query: &Query,
    env: &Environment<'_>,
    rng: &mut Rng,
) -> Result<EpisodeRecord> {
    let plan = agent
        .plan(&query.attributes)
        .ok_or_else(|| Error::Model(format!("no plan prepared for query {query}")))?;
    match (&agent.kind, &plan.policy) {
        (AgentKind::RandomLegal(budgets), _) => {
            let mut c = RandomLegalController {
                budget: budgets.get(query.len())?,
            };
            run_episode(query, &mut c, &plan.model, &agent.perception, env.world, rng)
        }
        (_, Some(policy)) => {
            let mut c = PolicyController { policy };
            run_episode(query, &mut c, &plan.model, &agent.perception, env.world, rng)
        }
        (_, None) => Err(Error::Model(format!("planning agent has no policy for {query}"))),
    }
}
