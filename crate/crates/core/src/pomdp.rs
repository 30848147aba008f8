//! Per-query POMDP construction.
//!
//! The state factors into a fully observable manipulation component
//! (x0..x4 plus `term`) and a hidden component holding one bit per queried
//! attribute. Exploratory actions move the manipulation state according to
//! a transition table; reporting actions assert a full assignment of the
//! hidden bits and end the episode.

use std::fmt;
use std::path::Path;

use crate::domain::{AttributeId, BehaviorId, Vocabulary};
use crate::error::{Error, Result};
use crate::itrs::{entropy, shaped_reward, ShapingParams};
use crate::perception::PerceptionModel;

pub const REPORT_REWARD: f64 = 300.0;
pub const DEFAULT_FAIL_PROB: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ManipState {
    X0,
    X1,
    X2,
    X3,
    X4,
    Term,
}

impl ManipState {
    pub const ALL: [ManipState; 6] = [
        ManipState::X0,
        ManipState::X1,
        ManipState::X2,
        ManipState::X3,
        ManipState::X4,
        ManipState::Term,
    ];
    /// States in which actions can be taken.
    pub const ACTIVE: [ManipState; 5] = [
        ManipState::X0,
        ManipState::X1,
        ManipState::X2,
        ManipState::X3,
        ManipState::X4,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        ["x0", "x1", "x2", "x3", "x4", "term"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|x| x.name() == s)
    }
}

impl fmt::Display for ManipState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Assignment of the queried attributes, bit `i` = attribute `i` of the
/// query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HiddenState(pub usize);

impl HiddenState {
    pub fn from_bits(bits: &[bool]) -> Self {
        HiddenState(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (i, &b)| acc | (usize::from(b) << i)),
        )
    }

    pub fn bit(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }

    pub fn bits(self, n: usize) -> Vec<bool> {
        (0..n).map(|i| self.bit(i)).collect()
    }

    /// `"10"` style rendering, first attribute first.
    pub fn label(self, n: usize) -> String {
        (0..n).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Explore(BehaviorId),
    Report(HiddenState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpec {
    pub kind: ActionKind,
    /// Zero for reports.
    pub cost_seconds: f64,
}

impl ActionSpec {
    pub fn is_report(&self) -> bool {
        matches!(self.kind, ActionKind::Report(_))
    }

    pub fn behavior(&self) -> Option<BehaviorId> {
        match self.kind {
            ActionKind::Explore(b) => Some(b),
            ActionKind::Report(_) => None,
        }
    }

    pub fn name(&self, vocab: &Vocabulary, n_attrs: usize) -> String {
        match self.kind {
            ActionKind::Explore(b) => vocab.behavior_name(b).to_string(),
            ActionKind::Report(y) => format!("report_{}", y.label(n_attrs)),
        }
    }
}

/// Observed attribute bits, or the perception-free null symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationSym {
    Bits(usize),
    Null,
}

impl ObservationSym {
    pub fn index(self, n_hidden: usize) -> usize {
        match self {
            ObservationSym::Bits(v) => v,
            ObservationSym::Null => n_hidden,
        }
    }

    pub fn from_index(i: usize, n_hidden: usize) -> Self {
        if i == n_hidden {
            ObservationSym::Null
        } else {
            ObservationSym::Bits(i)
        }
    }
}

/// Cost defaults per behavior name; `look` and `press` are the two measured
/// anchors, the rest are configuration defaults.
pub const DEFAULT_COSTS: [(&str, f64); 10] = [
    ("look", 0.5),
    ("grasp", 10.0),
    ("lift", 8.0),
    ("hold", 5.0),
    ("shake", 6.0),
    ("drop", 3.0),
    ("push", 6.0),
    ("tap", 4.0),
    ("poke", 4.0),
    ("press", 22.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    costs: Vec<Option<f64>>,
}

impl CostTable {
    /// Defaults for every behavior of the standard alphabet present in
    /// `vocab`; other behaviors stay unset.
    pub fn standard(vocab: &Vocabulary) -> Self {
        let costs = vocab
            .all_behaviors()
            .map(|b| {
                let name = vocab.behavior_name(b);
                DEFAULT_COSTS.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
            })
            .collect();
        CostTable { costs }
    }

    pub fn set(&mut self, b: BehaviorId, cost: f64) -> Result<()> {
        if !(cost >= 0.0 && cost.is_finite()) {
            return Err(Error::Config(format!("cost {cost} must be a non-negative number")));
        }
        if b.index() >= self.costs.len() {
            self.costs.resize(b.index() + 1, None);
        }
        self.costs[b.index()] = Some(cost);
        Ok(())
    }

    pub fn get(&self, b: BehaviorId) -> Option<f64> {
        self.costs.get(b.index()).copied().flatten()
    }

    pub fn cost(&self, b: BehaviorId) -> Result<f64> {
        self.get(b)
            .ok_or_else(|| Error::Model(format!("no cost configured for behavior #{}", b.0)))
    }

    /// Applies overrides from a `action,cost_seconds` CSV.
    pub fn apply_csv(&mut self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let err = |msg: String| Error::Load {
                file: path.display().to_string(),
                row,
                msg,
            };
            if rec.len() != 2 {
                return Err(err("expected action,cost_seconds".into()));
            }
            let b = vocab
                .behavior(&rec[0])
                .ok_or_else(|| err(format!("unknown action {:?}", &rec[0])))?;
            let c: f64 = rec[1].parse().map_err(|_| err(format!("bad cost {:?}", &rec[1])))?;
            self.set(b, c).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }
}

/// Outcome distribution over manipulation states.
pub type Outcomes = Vec<(ManipState, f64)>;

/// Exploratory actions available in each active manipulation state and
/// where they lead.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    rows: Vec<Vec<(BehaviorId, Outcomes)>>,
}

impl TransitionTable {
    /// The default five-state graph. State-advancing actions (look, grasp,
    /// lift, drop) fail with `fail_prob` and leave the state unchanged; all
    /// other behaviors are deterministic self-loops. Behaviors absent from
    /// `vocab` are skipped.
    pub fn standard(vocab: &Vocabulary, fail_prob: f64) -> Result<Self> {
        use ManipState::*;
        if !(0.0..1.0).contains(&fail_prob) {
            return Err(Error::Config(format!("failure probability {fail_prob} outside [0,1)")));
        }
        let advancing = |from: ManipState, to: ManipState| {
            if fail_prob > 0.0 {
                vec![(to, 1.0 - fail_prob), (from, fail_prob)]
            } else {
                vec![(to, 1.0)]
            }
        };
        let spec: [(ManipState, &[(&str, Option<ManipState>)]); 5] = [
            (X0, &[("look", Some(X1))]),
            (
                X1,
                &[("grasp", Some(X2)), ("push", None), ("tap", None), ("poke", None), ("press", None)],
            ),
            (X2, &[("lift", Some(X3))]),
            (X3, &[("hold", None), ("shake", None), ("drop", Some(X4))]),
            (
                X4,
                &[("grasp", Some(X2)), ("push", None), ("tap", None), ("poke", None), ("press", None)],
            ),
        ];
        let mut rows = vec![Vec::new(); 5];
        for (from, actions) in spec {
            for &(name, target) in actions {
                let Some(b) = vocab.behavior(name) else { continue };
                let outcomes = match target {
                    Some(to) => advancing(from, to),
                    None => vec![(from, 1.0)],
                };
                rows[from.index()].push((b, outcomes));
            }
            rows[from.index()].sort_by_key(|(b, _)| *b);
        }
        let table = TransitionTable { rows };
        table.validate()?;
        Ok(table)
    }

    /// Reads a `from_x,action,to_x,prob` CSV.
    pub fn from_csv(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut rows: Vec<Vec<(BehaviorId, Outcomes)>> = vec![Vec::new(); 5];
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let err = |msg: String| Error::Load {
                file: path.display().to_string(),
                row,
                msg,
            };
            if rec.len() != 4 {
                return Err(err("expected from_x,action,to_x,prob".into()));
            }
            let from = ManipState::parse(&rec[0])
                .filter(|x| *x != ManipState::Term)
                .ok_or_else(|| err(format!("bad from_x {:?}", &rec[0])))?;
            let to = ManipState::parse(&rec[2])
                .filter(|x| *x != ManipState::Term)
                .ok_or_else(|| err(format!("bad to_x {:?}", &rec[2])))?;
            let b = vocab
                .behavior(&rec[1])
                .ok_or_else(|| err(format!("unknown action {:?}", &rec[1])))?;
            let p: f64 = rec[3].parse().map_err(|_| err(format!("bad prob {:?}", &rec[3])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(format!("probability {p} outside [0,1]")));
            }
            let list = &mut rows[from.index()];
            match list.iter_mut().find(|(bb, _)| *bb == b) {
                Some((_, outcomes)) => outcomes.push((to, p)),
                None => list.push((b, vec![(to, p)])),
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|(b, _)| *b);
        }
        let table = TransitionTable { rows };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for (xi, row) in self.rows.iter().enumerate() {
            for (b, outcomes) in row {
                let s: f64 = outcomes.iter().map(|(_, p)| p).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "transition row ({}, behavior #{}) sums to {s}",
                        ManipState::ACTIVE[xi],
                        b.0
                    )));
                }
            }
        }
        if self.rows[ManipState::X0.index()].is_empty() {
            return Err(Error::Config("no exploratory action is legal in x0".into()));
        }
        Ok(())
    }

    pub fn exploratory(&self, x: ManipState) -> &[(BehaviorId, Outcomes)] {
        if x == ManipState::Term {
            return &[];
        }
        &self.rows[x.index()]
    }

    /// Every behavior legal somewhere, sorted.
    pub fn behaviors(&self) -> Vec<BehaviorId> {
        let mut out: Vec<BehaviorId> = self.rows.iter().flatten().map(|(b, _)| *b).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Legal action kinds in one manipulation state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalActions {
    pub exploratory: Vec<BehaviorId>,
    /// Reports are legal everywhere except x0.
    pub reports: bool,
}

pub fn legal_actions(table: &TransitionTable, x: ManipState) -> Result<LegalActions> {
    if x == ManipState::Term {
        return Err(Error::Model("no action is legal in term".into()));
    }
    Ok(LegalActions {
        exploratory: table.exploratory(x).iter().map(|(b, _)| *b).collect(),
        reports: x != ManipState::X0,
    })
}

/// Distribution over the next manipulation state.
pub fn build_transition(table: &TransitionTable, x: ManipState, action: &ActionKind) -> Result<Outcomes> {
    let legal = legal_actions(table, x)?;
    match action {
        ActionKind::Report(_) if legal.reports => Ok(vec![(ManipState::Term, 1.0)]),
        ActionKind::Report(_) => Err(Error::Model(format!("reporting is illegal in {x}"))),
        ActionKind::Explore(b) => table
            .exploratory(x)
            .iter()
            .find(|(bb, _)| bb == b)
            .map(|(_, o)| o.clone())
            .ok_or_else(|| Error::Model(format!("behavior #{} is illegal in {x}", b.0))),
    }
}

/// Observation distribution over the 2^N attribute symbols plus null, for
/// hidden state `y`. Exploratory rows multiply per-attribute confusion
/// entries; reports observe null.
pub fn build_observation(
    y: HiddenState,
    action: &ActionKind,
    thetas: &[&crate::perception::ConfusionMatrix],
) -> Result<Vec<f64>> {
    let n = thetas.len();
    let n_hidden = 1usize << n;
    let mut row = vec![0.0; n_hidden + 1];
    match action {
        ActionKind::Report(_) => row[n_hidden] = 1.0,
        ActionKind::Explore(b) => {
            for t in thetas {
                if t.behavior != *b {
                    return Err(Error::Model(format!(
                        "confusion matrix for behavior #{} supplied to behavior #{}",
                        t.behavior.0, b.0
                    )));
                }
            }
            for (z, cell) in row.iter_mut().take(n_hidden).enumerate() {
                *cell = thetas
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t.prob(y.bit(i), (z >> i) & 1 == 1))
                    .product();
            }
        }
    }
    Ok(row)
}

/// Unshaped reward: exploration costs its duration in seconds, reports win
/// or lose [`REPORT_REWARD`], and nothing happens in `term`.
pub fn build_real_reward(x: ManipState, y: HiddenState, action: &ActionSpec) -> f64 {
    if x == ManipState::Term {
        return 0.0;
    }
    match action.kind {
        ActionKind::Explore(_) => -action.cost_seconds,
        ActionKind::Report(r) if r == y => REPORT_REWARD,
        ActionKind::Report(_) => -REPORT_REWARD,
    }
}

/// Shaping terms for one query: weights plus the mean interaction
/// experience of each behavior over the queried attributes (indexed by
/// behavior).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingInputs {
    pub params: ShapingParams,
    pub ie_mean: Vec<f64>,
}

/// A fully built POMDP over exactly the queried attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    attributes: Vec<AttributeId>,
    n_hidden: usize,
    actions: Vec<ActionSpec>,
    legal: Vec<Vec<usize>>,
    transitions: Vec<Vec<Outcomes>>,
    observations: Vec<Vec<f64>>,
    rewards: Vec<Vec<Vec<f64>>>,
    gamma: f64,
}

impl PomdpModel {
    pub fn attributes(&self) -> &[AttributeId] {
        &self.attributes
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    /// |𝒴| = 2^N.
    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// 2^N attribute symbols plus null.
    pub fn n_observations(&self) -> usize {
        self.n_hidden + 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn action(&self, a: usize) -> &ActionSpec {
        &self.actions[a]
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Action indices legal in `x`, ascending. Empty for `term`.
    pub fn legal(&self, x: ManipState) -> &[usize] {
        if x == ManipState::Term {
            return &[];
        }
        &self.legal[x.index()]
    }

    pub fn report_action(&self, y: HiddenState) -> usize {
        self.actions.len() - self.n_hidden + y.0
    }

    pub fn action_for_behavior(&self, b: BehaviorId) -> Option<usize> {
        self.actions.iter().position(|a| a.kind == ActionKind::Explore(b))
    }

    /// Next manipulation-state distribution for a legal `a` in `x`.
    pub fn manip_transition(&self, x: ManipState, a: usize) -> &[(ManipState, f64)] {
        if x == ManipState::Term {
            return &[(ManipState::Term, 1.0)];
        }
        &self.transitions[x.index()][a]
    }

    /// O(z | y, a) for all z.
    pub fn observation_row(&self, a: usize, y: HiddenState) -> &[f64] {
        let n_obs = self.n_observations();
        &self.observations[a][y.0 * n_obs..(y.0 + 1) * n_obs]
    }

    pub fn observation_prob(&self, a: usize, y: HiddenState, z: ObservationSym) -> f64 {
        self.observation_row(a, y)[z.index(self.n_hidden)]
    }

    /// R((x,y), a); independent of the successor.
    pub fn reward(&self, x: ManipState, y: HiddenState, a: usize) -> f64 {
        if x == ManipState::Term {
            return 0.0;
        }
        self.rewards[x.index()][a][y.0]
    }

    /// Reward vector over hidden states for (x, a).
    pub fn reward_vector(&self, x: ManipState, a: usize) -> &[f64] {
        &self.rewards[x.index()][a]
    }

    // Flat state view: s = x·2^N + y over all six manipulation states.

    pub fn n_states(&self) -> usize {
        ManipState::ALL.len() * self.n_hidden
    }

    pub fn state_index(&self, x: ManipState, y: HiddenState) -> usize {
        x.index() * self.n_hidden + y.0
    }

    pub fn decode_state(&self, s: usize) -> (ManipState, HiddenState) {
        (
            ManipState::from_index(s / self.n_hidden).expect("state index in range"),
            HiddenState(s % self.n_hidden),
        )
    }

    /// T(s, a, ·) as (state, prob) pairs; `None` when `a` is illegal in s.
    /// `term` is absorbing under every action.
    pub fn transition(&self, s: usize, a: usize) -> Option<Vec<(usize, f64)>> {
        let (x, y) = self.decode_state(s);
        if x == ManipState::Term {
            return Some(vec![(s, 1.0)]);
        }
        if !self.legal[x.index()].contains(&a) {
            return None;
        }
        Some(
            self.transitions[x.index()][a]
                .iter()
                .map(|&(x2, p)| (self.state_index(x2, y), p))
                .collect(),
        )
    }

    /// O(s', a, z). Arriving in `term` always yields null.
    pub fn observation(&self, s_next: usize, a: usize, z: ObservationSym) -> f64 {
        let (x, y) = self.decode_state(s_next);
        if x == ManipState::Term {
            return if z == ObservationSym::Null { 1.0 } else { 0.0 };
        }
        self.observation_prob(a, y, z)
    }

    pub fn state_reward(&self, s: usize, a: usize) -> f64 {
        let (x, y) = self.decode_state(s);
        if x == ManipState::Term {
            return 0.0;
        }
        self.reward(x, y, a)
    }

    /// Copy with rewards replaced; used by tests and sweeps.
    pub fn with_rewards(&self, f: impl Fn(ManipState, HiddenState, &ActionSpec) -> f64) -> PomdpModel {
        let mut m = self.clone();
        for x in ManipState::ACTIVE {
            for &a in &self.legal[x.index()] {
                for y in 0..self.n_hidden {
                    m.rewards[x.index()][a][y] = f(x, HiddenState(y), &self.actions[a]);
                }
            }
        }
        m
    }
}

/// Builds the minimal POMDP for the queried attributes. With `shaping`, the
/// exploratory rewards carry the entropy bonus and experience penalty;
/// reports are never shaped.
pub fn construct_pomdp(
    attributes: &[AttributeId],
    perception: &PerceptionModel,
    costs: &CostTable,
    table: &TransitionTable,
    shaping: Option<&ShapingInputs>,
    gamma: f64,
) -> Result<PomdpModel> {
    if attributes.is_empty() {
        return Err(Error::Model("query has no attributes".into()));
    }
    if attributes.len() > 8 {
        return Err(Error::Model(format!("query of {} attributes is too large", attributes.len())));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("discount {gamma} outside (0,1)")));
    }
    let n = attributes.len();
    let n_hidden = 1usize << n;
    let n_obs = n_hidden + 1;

    let mut actions = Vec::new();
    for b in table.behaviors() {
        actions.push(ActionSpec {
            kind: ActionKind::Explore(b),
            cost_seconds: costs.cost(b)?,
        });
    }
    let n_explore = actions.len();
    for y in 0..n_hidden {
        actions.push(ActionSpec {
            kind: ActionKind::Report(HiddenState(y)),
            cost_seconds: 0.0,
        });
    }

    // observation rows
    let mut observations = Vec::with_capacity(actions.len());
    for spec in &actions {
        let mut flat = Vec::with_capacity(n_hidden * n_obs);
        let thetas: Vec<&crate::perception::ConfusionMatrix> = match spec.kind {
            ActionKind::Explore(b) => attributes
                .iter()
                .map(|&p| {
                    perception.theta(p, b).ok_or_else(|| {
                        Error::Model(format!("missing confusion matrix for attribute #{} behavior #{}", p.0, b.0))
                    })
                })
                .collect::<Result<_>>()?,
            ActionKind::Report(_) => Vec::new(),
        };
        for y in 0..n_hidden {
            let row = if spec.is_report() {
                let mut r = vec![0.0; n_obs];
                r[n_hidden] = 1.0;
                r
            } else {
                build_observation(HiddenState(y), &spec.kind, &thetas)?
            };
            flat.extend(row);
        }
        observations.push(flat);
    }

    let mut legal = vec![Vec::new(); 5];
    let mut transitions = vec![vec![Vec::new(); actions.len()]; 5];
    let mut rewards = vec![vec![vec![0.0; n_hidden]; actions.len()]; 5];
    for x in ManipState::ACTIVE {
        let la = legal_actions(table, x)?;
        for (a, spec) in actions.iter().enumerate() {
            let is_legal = match spec.kind {
                ActionKind::Explore(b) => la.exploratory.contains(&b),
                ActionKind::Report(_) => la.reports,
            };
            if !is_legal {
                continue;
            }
            legal[x.index()].push(a);
            transitions[x.index()][a] = build_transition(table, x, &spec.kind)?;
            for y in 0..n_hidden {
                let yh = HiddenState(y);
                let real = build_real_reward(x, yh, spec);
                rewards[x.index()][a][y] = match (shaping, spec.kind) {
                    (Some(sh), ActionKind::Explore(b)) => {
                        let row = &observations[a][y * n_obs..(y + 1) * n_obs];
                        let ie = sh.ie_mean.get(b.index()).copied().unwrap_or(0.0);
                        shaped_reward(real, entropy(row), ie, &sh.params)
                    }
                    _ => real,
                };
            }
        }
    }
    debug_assert!(legal.iter().all(|l| l.windows(2).all(|w| w[0] < w[1])));
    let _ = n_explore;

    Ok(PomdpModel {
        attributes: attributes.to_vec(),
        n_hidden,
        actions,
        legal,
        transitions,
        observations,
        rewards,
        gamma,
    })
}
