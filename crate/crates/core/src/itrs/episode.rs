use crate::dataset::{sample_execution, Dataset, FeatureInstance};
use crate::domain::{ground_truth, Query};
use crate::error::{Error, Result};
use crate::perception::PerceptionModel;
use crate::pomdp::{ActionKind, HiddenState, ManipState, ObservationSym, PomdpModel};
use crate::seeding::Rng;
use crate::solver::{belief_update, best_action, Belief, Policy};

use super::ExperienceLedger;

/// Episodes longer than this are cut off and counted as failures.
pub const MAX_EPISODE_STEPS: usize = 100;

/// Chooses the next action from the current belief.
pub trait Controller {
    fn choose(&mut self, belief: &Belief, elapsed: f64, model: &PomdpModel, rng: &mut Rng) -> Result<usize>;
}

/// Follows a solved alpha-vector policy.
pub struct PolicyController<'a> {
    pub policy: &'a Policy,
}

impl Controller for PolicyController<'_> {
    fn choose(&mut self, belief: &Belief, _elapsed: f64, _model: &PomdpModel, _rng: &mut Rng) -> Result<usize> {
        best_action(self.policy, belief)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub action: usize,
    pub kind: ActionKind,
    pub from: ManipState,
    pub to: ManipState,
    /// Null for reports.
    pub observation: ObservationSym,
    /// World execution the features came from, for exploratory steps.
    pub execution: Option<usize>,
    pub cost_seconds: f64,
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub query: Query,
    pub steps: Vec<EpisodeStep>,
    /// `None` when the episode hit the step cap.
    pub report: Option<HiddenState>,
    pub truth: HiddenState,
    pub correct: bool,
    pub aborted: bool,
    pub total_cost_seconds: f64,
}

impl EpisodeRecord {
    /// World executions collected during the episode, in order.
    pub fn collected(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().filter_map(|s| s.execution)
    }
}

fn sample_outcome(outcomes: &[(ManipState, f64)], rng: &mut Rng) -> ManipState {
    use rand::Rng as _;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(x, p) in outcomes {
        acc += p;
        if u < acc {
            return x;
        }
    }
    outcomes.last().expect("non-empty outcome list").0
}

/// Simulates one identification episode against the world's recorded
/// features. Observations are the thresholded fused predictions of
/// `perception` on the sampled execution.
pub fn run_episode(
    query: &Query,
    controller: &mut dyn Controller,
    model: &PomdpModel,
    perception: &PerceptionModel,
    world: &Dataset,
    rng: &mut Rng,
) -> Result<EpisodeRecord> {
    if model.attributes() != query.attributes.as_slice() {
        return Err(Error::Model("model was built for a different query".into()));
    }
    let vocab = world.vocab();
    let truth = HiddenState::from_bits(&ground_truth(query, world.label_table())?);
    let mut b = Belief::uniform(ManipState::X0, model.n_hidden());
    let mut steps = Vec::new();
    let mut elapsed = 0.0;
    let mut report = None;
    while steps.len() < MAX_EPISODE_STEPS {
        let a = controller.choose(&b, elapsed, model, rng)?;
        if !model.legal(b.manip).contains(&a) {
            return Err(Error::Model(format!("controller chose an illegal action in {}", b.manip)));
        }
        let spec = *model.action(a);
        match spec.kind {
            ActionKind::Report(y) => {
                steps.push(EpisodeStep {
                    action: a,
                    kind: spec.kind,
                    from: b.manip,
                    to: ManipState::Term,
                    observation: ObservationSym::Null,
                    execution: None,
                    cost_seconds: 0.0,
                    belief: b.hidden.clone(),
                });
                report = Some(y);
                break;
            }
            ActionKind::Explore(behavior) => {
                let x2 = sample_outcome(model.manip_transition(b.manip, a), rng);
                let exec_id = sample_execution(world, query.object, behavior, rng)?;
                let exec = world.execution(exec_id);
                let instances: Vec<&FeatureInstance> = exec.instances.iter().map(|&i| world.instance(i)).collect();
                let mut z = 0usize;
                for (i, &p) in query.attributes.iter().enumerate() {
                    let pr = match perception.behavior_model(p, behavior) {
                        Some(m) => m.fuse(vocab, &instances)?,
                        None => 0.5,
                    };
                    if pr > 0.5 {
                        z |= 1 << i;
                    }
                }
                let zs = ObservationSym::Bits(z);
                let from = b.manip;
                b = belief_update(&b, a, zs, x2, model)?;
                elapsed += spec.cost_seconds;
                steps.push(EpisodeStep {
                    action: a,
                    kind: spec.kind,
                    from,
                    to: x2,
                    observation: zs,
                    execution: Some(exec_id),
                    cost_seconds: spec.cost_seconds,
                    belief: b.hidden.clone(),
                });
            }
        }
    }
    let aborted = report.is_none();
    if aborted {
        log::debug!("episode for {query} hit the {MAX_EPISODE_STEPS}-step cap without reporting");
    }
    Ok(EpisodeRecord {
        query: query.clone(),
        report,
        truth,
        correct: report == Some(truth),
        aborted,
        total_cost_seconds: steps.iter().map(|s| s.cost_seconds).sum(),
        steps,
    })
}

/// Which episodes earn human labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// Every episode's features are labeled.
    #[default]
    FullLabel,
    /// Multi-attribute episodes are labeled only after a correct report.
    Strict,
}

/// Labels the episode's collected executions with the query's true values,
/// appends them to `dataset` and credits the ledger. Returns the number of
/// instances added.
pub fn episode_feedback(
    record: &EpisodeRecord,
    world: &Dataset,
    dataset: &mut Dataset,
    ledger: &mut ExperienceLedger,
    mode: FeedbackMode,
) -> Result<usize> {
    if mode == FeedbackMode::Strict && record.query.len() >= 2 && !record.correct {
        return Ok(0);
    }
    let truth = ground_truth(&record.query, world.label_table())?;
    let mut added = 0;
    for exec in record.collected() {
        let copied = dataset.copy_execution(world, exec)?;
        let behavior = dataset.execution(copied).behavior;
        let n = dataset.execution(copied).instances.len();
        for (&p, &v) in record.query.attributes.iter().zip(&truth) {
            dataset.label_execution(copied, p, v)?;
            ledger.add(p, behavior, n as u64);
        }
        added += n;
    }
    Ok(added)
}
