//! Batch-based training and evaluation of the agents, parameter sweeps and
//! result files.

mod config;
mod oracle_check;
mod output;

pub use config::{
    load_config, parse_config, parse_override_args, DatasetSection, ExperimentConfig, FeedbackSetting,
    ModelSection, OutputSection, PerceptionSection, SolverSection, SweepSection, SynthSection, DEFAULT_ALPHA,
    DEFAULT_BETA,
};
pub use oracle_check::{oracle_check, random_models, OracleCase};
pub use output::{
    emit_outputs, emit_sweep, episode_log_csv, learning_curve_csv, learning_curve_svg, per_attribute_csv, per_attribute_report,
    sweep_csv, PerAttributeRow,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::agents::{AgentKind, AgentState, Environment};
use crate::dataset::{load_dataset, pretrain, split_objects, synth_generate, Dataset, ObjectSplit};
use crate::domain::{AttributeId, ObjectId, Query, Vocabulary};
use crate::error::{Error, Result};
use crate::itrs::{EpisodeRecord, ExperienceLedger};
use crate::perception::{rank_attribute_learnability, ConfusionMatrix};
use crate::pomdp::{CostTable, TransitionTable};
use crate::seeding::{self, Rng};

/// Correct and total counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub correct: u32,
    pub total: u32,
}

impl Tally {
    pub fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += u32::from(ok);
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| f64::from(self.correct) / f64::from(self.total))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Fraction of reports that were correct; episodes cut off by the step
    /// cap have no report and are counted in `aborted` instead.
    pub accuracy: f64,
    pub mean_cost_seconds: f64,
    /// Per attribute: was that attribute's reported bit right.
    pub per_attribute: BTreeMap<AttributeId, Tally>,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    /// 0 is the pretrained starting point.
    pub batch: usize,
    pub cum_cost_seconds: f64,
    pub accuracy: f64,
    pub mean_cost_seconds: f64,
    pub per_attribute: BTreeMap<AttributeId, Tally>,
    pub aborted: usize,
}

impl BatchMetrics {
    pub fn cum_cost_hours(&self) -> f64 {
        self.cum_cost_seconds / 3600.0
    }
}

/// One training episode as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLogRow {
    pub batch: usize,
    pub trial: usize,
    pub query: String,
    pub object: String,
    pub actions: String,
    /// Reported bits, empty when the episode was cut off.
    pub report: String,
    pub correct: bool,
    pub cost_seconds: f64,
}

/// One alpha vector of a dumped policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub query: String,
    pub manip_state: String,
    pub action: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub agent: String,
    pub metrics: Vec<BatchMetrics>,
    pub episodes: Vec<EpisodeLogRow>,
    /// Per batch, when requested.
    pub confusions: Vec<Vec<ConfusionMatrix>>,
    pub policies: Vec<Vec<PolicyRow>>,
}

impl AgentRun {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map(|m| m.accuracy).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub vocab: Arc<Vocabulary>,
    pub attributes: Vec<AttributeId>,
    pub split: ObjectSplit,
    pub runs: Vec<AgentRun>,
}

impl ExperimentResult {
    pub fn run(&self, agent: &str) -> Option<&AgentRun> {
        self.runs.iter().find(|r| r.agent == agent)
    }
}

/// Loads or generates the world dataset named by the config.
pub fn load_world(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset.path {
        Some(p) => load_dataset(p),
        None => synth_generate(&cfg.dataset.synth.to_config(cfg.seed)),
    }
}

fn build_costs(cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<CostTable> {
    let mut costs = CostTable::standard(vocab);
    if let Some(p) = &cfg.model.costs {
        costs.apply_csv(p, vocab)?;
    }
    for (name, &c) in &cfg.model.cost {
        let b = vocab
            .behavior(name)
            .ok_or_else(|| Error::Config(format!("cost override for unknown behavior {name:?}")))?;
        costs.set(b, c)?;
    }
    Ok(costs)
}

fn build_transitions(cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<TransitionTable> {
    match &cfg.model.transitions {
        Some(p) => TransitionTable::from_csv(p, vocab),
        None => TransitionTable::standard(vocab, cfg.model.fail_prob),
    }
}

/// Every attribute set a query can ask about, in a fixed order: single
/// attributes, or sorted unordered pairs/triples.
pub fn query_sets(attributes: &[AttributeId], size: usize) -> Vec<Vec<AttributeId>> {
    fn rec(attrs: &[AttributeId], size: usize, start: usize, cur: &mut Vec<AttributeId>, out: &mut Vec<Vec<AttributeId>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..attrs.len() {
            cur.push(attrs[i]);
            rec(attrs, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut sorted = attributes.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    rec(&sorted, size, 0, &mut Vec::new(), &mut out);
    out
}

/// Uniform query over the attribute sets and objects.
pub fn draw_query(sets: &[Vec<AttributeId>], objects: &[ObjectId], rng: &mut Rng) -> Result<Query> {
    if sets.is_empty() || objects.is_empty() {
        return Err(Error::Config("cannot draw a query from an empty pool".into()));
    }
    let attrs = sets[rng.random_range(0..sets.len())].clone();
    let object = objects[rng.random_range(0..objects.len())];
    let n = attrs.len();
    Query::new(attrs, object, n)
}

/// Runs `trials` frozen-policy episodes on test objects. The agent is only
/// read; its dataset fingerprint is checked before and after.
pub fn evaluate_policy(
    agent: &AgentState,
    env: &Environment<'_>,
    sets: &[Vec<AttributeId>],
    objects: &[ObjectId],
    trials: usize,
    seed: u64,
    batch: usize,
) -> Result<EvalResult> {
    if trials == 0 {
        return Err(Error::Config("evaluation needs at least one trial".into()));
    }
    let before = agent.dataset.fingerprint();
    let records: Vec<EpisodeRecord> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let tags = [seeding::STREAM_EVAL, batch as u64, i as u64];
            let query = draw_query(sets, objects, &mut seeding::rng(seed, &[&tags[..], &[0]].concat()))?;
            agent.run_trial(&query, env, &mut seeding::rng(seed, &[&tags[..], &[1]].concat()))
        })
        .collect::<Result<_>>()?;
    if agent.dataset.fingerprint() != before {
        return Err(Error::Model("evaluation modified the agent's dataset".into()));
    }
    let mut per_attribute: BTreeMap<AttributeId, Tally> = BTreeMap::new();
    let mut correct = 0usize;
    let mut cost = 0.0;
    let mut aborted = 0;
    for r in &records {
        correct += usize::from(r.correct);
        cost += r.total_cost_seconds;
        aborted += usize::from(r.aborted);
        if r.report.is_none() {
            continue;
        }
        for (i, &p) in r.query.attributes.iter().enumerate() {
            let ok = r.report.is_some_and(|y| y.bit(i) == r.truth.bit(i));
            per_attribute.entry(p).or_default().add(ok);
        }
    }
    Ok(EvalResult {
        accuracy: if aborted < trials {
            correct as f64 / (trials - aborted) as f64
        } else {
            0.0
        },
        mean_cost_seconds: cost / trials as f64,
        per_attribute,
        aborted,
    })
}

fn log_row(record: &EpisodeRecord, batch: usize, trial: usize, agent: &AgentState, vocab: &Vocabulary) -> EpisodeLogRow {
    let n = record.query.len();
    let plan = agent.plan(&record.query.attributes).expect("plan exists for a finished episode");
    EpisodeLogRow {
        batch,
        trial,
        query: record
            .query
            .attributes
            .iter()
            .map(|&p| vocab.attribute_name(p))
            .collect::<Vec<_>>()
            .join("+"),
        object: vocab.object_name(record.query.object).to_string(),
        actions: record
            .steps
            .iter()
            .map(|s| plan.model.action(s.action).name(vocab, n))
            .collect::<Vec<_>>()
            .join(" "),
        report: record.report.map(|y| y.label(n)).unwrap_or_default(),
        correct: record.correct,
        cost_seconds: record.total_cost_seconds,
    }
}

fn policy_rows(agent: &AgentState, sets: &[Vec<AttributeId>], vocab: &Vocabulary) -> Vec<PolicyRow> {
    let mut rows = Vec::new();
    for attrs in sets {
        let Some(plan) = agent.plan(attrs) else { continue };
        let Some(policy) = &plan.policy else { continue };
        let query = attrs.iter().map(|&p| vocab.attribute_name(p)).collect::<Vec<_>>().join("+");
        for x in crate::pomdp::ManipState::ACTIVE {
            for alpha in policy.alphas(x) {
                rows.push(PolicyRow {
                    query: query.clone(),
                    manip_state: x.name().to_string(),
                    action: plan.model.action(alpha.action).name(vocab, attrs.len()),
                    values: alpha.values.clone(),
                });
            }
        }
    }
    rows
}

struct Shared<'w> {
    cfg: &'w ExperimentConfig,
    env: Environment<'w>,
    sets: Vec<Vec<AttributeId>>,
    split: ObjectSplit,
    pretrained: Dataset,
    attributes: Vec<AttributeId>,
}

fn snapshot(
    agent: &AgentState,
    shared: &Shared<'_>,
    batch: usize,
    cum_cost: f64,
    run: &mut AgentRun,
) -> Result<()> {
    let eval = evaluate_policy(
        agent,
        &shared.env,
        &shared.sets,
        &shared.split.test,
        shared.cfg.eval_trials,
        shared.cfg.seed,
        batch,
    )?;
    log::info!(
        "{} batch {batch}: accuracy {:.3}, training cost {:.2} h",
        agent.kind,
        eval.accuracy,
        cum_cost / 3600.0
    );
    if eval.aborted > 0 {
        log::warn!(
            "{} batch {batch}: {} of {} test episodes hit the step cap",
            agent.kind,
            eval.aborted,
            shared.cfg.eval_trials
        );
    }
    run.metrics.push(BatchMetrics {
        batch,
        cum_cost_seconds: cum_cost,
        accuracy: eval.accuracy,
        mean_cost_seconds: eval.mean_cost_seconds,
        per_attribute: eval.per_attribute,
        aborted: eval.aborted,
    });
    if shared.cfg.output.confusions {
        run.confusions.push(agent.perception.thetas().cloned().collect());
    }
    if shared.cfg.output.policies {
        run.policies.push(policy_rows(agent, &shared.sets, shared.env.world.vocab()));
    }
    Ok(())
}

fn run_agent(kind: AgentKind, shared: &Shared<'_>) -> Result<AgentRun> {
    let cfg = shared.cfg;
    let env = &shared.env;
    let mut agent = AgentState::new(
        kind,
        shared.pretrained.clone(),
        ExperienceLedger::new(cfg.delta)?,
        &shared.attributes,
        env,
    )?;
    agent.prepare(&shared.sets, env)?;
    let mut run = AgentRun {
        agent: agent.kind.tag().to_string(),
        metrics: Vec::new(),
        episodes: Vec::new(),
        confusions: Vec::new(),
        policies: Vec::new(),
    };
    let mut cum_cost = 0.0;
    snapshot(&agent, shared, 0, cum_cost, &mut run)?;
    for batch in 1..=cfg.batches {
        for trial in 0..cfg.batch_size() {
            let tags = [seeding::STREAM_TRAIN, batch as u64, trial as u64];
            let query = draw_query(
                &shared.sets,
                &shared.split.train,
                &mut seeding::rng(cfg.seed, &[&tags[..], &[0]].concat()),
            )?;
            let record = agent
                .run_trial(&query, env, &mut seeding::rng(cfg.seed, &[&tags[..], &[1]].concat()))
                .map_err(|e| Error::Model(format!("batch {batch}: {e}")))?;
            run.episodes.push(log_row(&record, batch, trial, &agent, env.world.vocab()));
            cum_cost += record.total_cost_seconds;
            agent.learn(&record, env)?;
        }
        agent.refresh(env)?;
        agent
            .prepare(&shared.sets, env)
            .map_err(|e| Error::Model(format!("batch {batch}: {e}")))?;
        snapshot(&agent, shared, batch, cum_cost, &mut run)?;
    }
    Ok(run)
}

/// Trains and evaluates every configured agent. Agents run in parallel on
/// separate copies of the pretraining data; all randomness is derived from
/// the experiment seed so agents face the same queries.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let world = load_world(cfg)?;
    run_experiment_on(cfg, &world)
}

/// [`run_experiment`] on an already loaded world.
pub fn run_experiment_on(cfg: &ExperimentConfig, world: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    let kinds = cfg.agent_kinds()?;
    let vocab = world.vocab().clone();
    let split = split_objects(world, cfg.seed)?;
    let all: Vec<AttributeId> = vocab.all_attributes().collect();
    let perception_cfg = cfg.perception_config();
    let mut attributes = if cfg.attributes >= all.len() {
        all.clone()
    } else {
        let ranking_data = pretrain(world, &split.pretrain, &all)?;
        let mut ranked = rank_attribute_learnability(&ranking_data, &all, &perception_cfg);
        ranked.truncate(cfg.attributes);
        ranked
    };
    attributes.sort();
    if attributes.len() < cfg.query_size {
        return Err(Error::Config(format!(
            "{}-attribute queries need at least that many attributes, dataset has {}",
            cfg.query_size,
            attributes.len()
        )));
    }
    let env = Environment {
        world,
        costs: build_costs(cfg, &vocab)?,
        transitions: build_transitions(cfg, &vocab)?,
        gamma: cfg.model.gamma,
        solver: cfg.solver_config(),
        perception: perception_cfg,
        feedback: cfg.feedback.into(),
    };
    let shared = Shared {
        cfg,
        sets: query_sets(&attributes, cfg.query_size),
        pretrained: pretrain(world, &split.pretrain, &attributes)?,
        split: split.clone(),
        attributes: attributes.clone(),
        env,
    };
    let runs: Vec<AgentRun> = kinds
        .into_par_iter()
        .map(|k| run_agent(k, &shared))
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        vocab,
        attributes,
        split,
        runs,
    })
}

/// Batch indices reported as early, middle and late.
pub fn phase_batches(batches: usize) -> [usize; 3] {
    if batches == 0 {
        [0, 0, 0]
    } else {
        [1, batches.div_ceil(2), batches]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    /// ITRS accuracy at the early, middle and late batches.
    pub phases: Option<[f64; 3]>,
    pub error: Option<String>,
}

/// One ITRS-only experiment per (α, β) cell. A failing cell is recorded and
/// the sweep continues.
pub fn sweep_params(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    cfg.validate_sweep()?;
    let world = load_world(cfg)?;
    let grid: Vec<(f64, f64)> = cfg
        .sweep
        .alpha
        .iter()
        .flat_map(|&a| cfg.sweep.beta.iter().map(move |&b| (a, b)))
        .collect();
    let phases = phase_batches(cfg.batches);
    Ok(grid
        .into_par_iter()
        .map(|(alpha, beta)| {
            let cell_cfg = ExperimentConfig {
                alpha,
                beta,
                agents: vec!["itrs".into()],
                ..cfg.clone()
            };
            match run_experiment_on(&cell_cfg, &world) {
                Ok(res) => {
                    let m = &res.runs[0].metrics;
                    SweepCell {
                        alpha,
                        beta,
                        phases: Some(phases.map(|i| m[i].accuracy)),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("sweep cell alpha={alpha} beta={beta} failed: {e}");
                    SweepCell {
                        alpha,
                        beta,
                        phases: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}
