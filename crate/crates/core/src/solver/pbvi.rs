use rand::Rng as _;

use crate::error::{Error, Result};
use crate::pomdp::{HiddenState, ManipState, ObservationSym, PomdpModel};
use crate::seeding;

use super::belief::{belief_update, observation_likelihood, Belief};

/// Alpha values closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when no belief point's value moves by more than this.
    pub precision: f64,
    /// Backup sweeps per value-iteration phase.
    pub max_iter: usize,
    /// Belief points kept per manipulation state.
    pub max_points: usize,
    /// Belief-set expansion rounds.
    pub expansions: usize,
    /// New points closer than this (L1) to an existing one are dropped.
    pub min_distance: f64,
    pub seed: u64,
    /// Plan for this many steps instead of the infinite discounted horizon.
    pub horizon: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            precision: 1e-3,
            max_iter: 500,
            max_points: 64,
            expansions: 8,
            min_distance: 1e-3,
            seed: 0,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

type VectorSets = Vec<Vec<AlphaVector>>;

/// Alpha-vector policy, one set per active manipulation state. A
/// finite-horizon policy keeps one stage of sets per number of steps to go.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    stages: Vec<VectorSets>,
    horizon: Option<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub belief_points: usize,
}

impl Policy {
    /// Vectors for `x`; for a finite-horizon policy, those of the full horizon.
    pub fn alphas(&self, x: ManipState) -> &[AlphaVector] {
        if x == ManipState::Term {
            return &[];
        }
        &self.stages[self.stages.len() - 1][x.index()]
    }

    /// Vectors for `x` with `steps_to_go` decisions left. Stationary
    /// policies ignore the step count.
    pub fn alphas_at(&self, x: ManipState, steps_to_go: usize) -> &[AlphaVector] {
        match self.horizon {
            None => self.alphas(x),
            Some(_) if x == ManipState::Term || steps_to_go == 0 => &[],
            Some(h) => &self.stages[steps_to_go.min(h) - 1][x.index()],
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    /// Multiplies every alpha vector by `k`.
    pub fn scaled(&self, k: f64) -> Policy {
        let mut p = self.clone();
        for a in p.stages.iter_mut().flatten().flatten() {
            a.values.iter_mut().for_each(|v| *v *= k);
        }
        p
    }
}

fn dot(b: &[f64], v: &[f64]) -> f64 {
    b.iter().zip(v).map(|(x, y)| x * y).sum()
}

/// Index of the best vector: highest value, lowest action among ties.
fn best_index(set: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let all: Vec<(usize, f64)> = set.collect();
    let max = all.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let tol = TIE_TOLERANCE * (1.0 + max.abs());
    all.into_iter().filter(|e| e.1 >= max - tol).min_by_key(|e| e.0)
}

/// Greedy action for belief `b`.
pub fn best_action(policy: &Policy, b: &Belief) -> Result<usize> {
    greedy(policy.alphas(b.manip), b)
}

/// Greedy action for belief `b` with `steps_to_go` decisions left.
pub fn best_action_at(policy: &Policy, b: &Belief, steps_to_go: usize) -> Result<usize> {
    greedy(policy.alphas_at(b.manip, steps_to_go), b)
}

fn greedy(set: &[AlphaVector], b: &Belief) -> Result<usize> {
    if set.is_empty() {
        return Err(Error::Solver(format!("policy has no vectors for {}", b.manip)));
    }
    let (i, _) = best_index(set.iter().map(|a| (a.action, dot(&b.hidden, &a.values))))
        .ok_or_else(|| Error::Solver("non-finite policy value".into()))?;
    Ok(i)
}

/// Value of the policy's upper envelope at `b`; 0 in `term`.
pub fn value(policy: &Policy, b: &Belief) -> f64 {
    policy
        .alphas(b.manip)
        .iter()
        .map(|a| dot(&b.hidden, &a.values))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(if b.manip == ManipState::Term { 0.0 } else { f64::NEG_INFINITY })
}

struct Solver<'m> {
    model: &'m PomdpModel,
    cfg: SolverConfig,
}

impl Solver<'_> {
    fn initial_alphas(&self) -> Vec<Vec<AlphaVector>> {
        let m = self.model;
        let mut r_min: f64 = 0.0;
        for x in ManipState::ACTIVE {
            for &a in m.legal(x) {
                for &r in m.reward_vector(x, a) {
                    r_min = r_min.min(r);
                }
            }
        }
        let floor = r_min / (1.0 - m.gamma());
        ManipState::ACTIVE
            .iter()
            .map(|&x| {
                let legal = m.legal(x);
                let mut set = vec![AlphaVector {
                    action: legal[0],
                    values: vec![floor; m.n_hidden()],
                }];
                for &a in legal.iter().filter(|&&a| m.action(a).is_report()) {
                    set.push(AlphaVector {
                        action: a,
                        values: m.reward_vector(x, a).to_vec(),
                    });
                }
                set
            })
            .collect()
    }

    /// Point-based Bellman backup at `b`.
    fn backup(&self, alphas: &[Vec<AlphaVector>], b: &Belief) -> AlphaVector {
        let m = self.model;
        let x = b.manip;
        let n_h = m.n_hidden();
        let mut candidates = Vec::with_capacity(m.legal(x).len());
        for &a in m.legal(x) {
            let mut g = m.reward_vector(x, a).to_vec();
            if !m.action(a).is_report() {
                for &(x2, p) in m.manip_transition(x, a) {
                    if x2 == ManipState::Term || p == 0.0 {
                        continue;
                    }
                    let set = &alphas[x2.index()];
                    if set.is_empty() {
                        continue;
                    }
                    for z in 0..m.n_observations() {
                        let o: Vec<f64> = (0..n_h).map(|y| m.observation_row(a, HiddenState(y))[z]).collect();
                        if o.iter().all(|&v| v == 0.0) {
                            continue;
                        }
                        let w: Vec<f64> = (0..n_h).map(|y| b.hidden[y] * o[y]).collect();
                        let weights = if w.iter().sum::<f64>() > 0.0 { w } else { o.clone() };
                        let chosen = set
                            .iter()
                            .enumerate()
                            .map(|(i, al)| (i, dot(&weights, &al.values)))
                            .fold((0, f64::NEG_INFINITY), |acc, e| if e.1 > acc.1 { e } else { acc })
                            .0;
                        let al = &set[chosen].values;
                        for y in 0..n_h {
                            g[y] += m.gamma() * p * o[y] * al[y];
                        }
                    }
                }
            }
            candidates.push(AlphaVector { action: a, values: g });
        }
        let (best, _) = best_index(
            candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (i, dot(&b.hidden, &c.values)))
                .map(|(i, v)| (candidates[i].action, v)),
        )
        .expect("finite backup values");
        candidates.into_iter().find(|c| c.action == best).expect("chosen candidate exists")
    }

    /// Backup sweeps over the belief points. A point keeps its previous
    /// best vector when the new backup is worse there, so point values never
    /// decrease.
    fn iterate(&self, alphas: &mut Vec<Vec<AlphaVector>>, points: &[Vec<Belief>]) -> (usize, f64, bool) {
        let mut residual = f64::INFINITY;
        for it in 1..=self.cfg.max_iter {
            let mut next: Vec<Vec<AlphaVector>> = Vec::with_capacity(alphas.len());
            residual = 0.0;
            for (xi, pts) in points.iter().enumerate() {
                let mut set: Vec<AlphaVector> = Vec::with_capacity(pts.len());
                for b in pts {
                    let fresh = self.backup(alphas, b);
                    let new = dot(&b.hidden, &fresh.values);
                    let (old_vec, old) = alphas[xi]
                        .iter()
                        .map(|a| (a, dot(&b.hidden, &a.values)))
                        .fold((&alphas[xi][0], f64::NEG_INFINITY), |acc, e| if e.1 > acc.1 { e } else { acc });
                    let keep = if new >= old {
                        residual = residual.max(new - old);
                        fresh
                    } else {
                        old_vec.clone()
                    };
                    if !set.iter().any(|s| s.action == keep.action && s.values == keep.values) {
                        set.push(keep);
                    }
                }
                self.keep_reports(&mut set, ManipState::ACTIVE[xi]);
                next.push(set);
            }
            *alphas = next;
            if residual < self.cfg.precision {
                return (it, residual, true);
            }
        }
        (self.cfg.max_iter, residual, false)
    }

    /// Immediate-report vectors are exact, so every set keeps them.
    fn keep_reports(&self, set: &mut Vec<AlphaVector>, x: ManipState) {
        let m = self.model;
        for &a in m.legal(x) {
            if m.action(a).is_report() && !set.iter().any(|s| s.action == a) {
                set.push(AlphaVector {
                    action: a,
                    values: m.reward_vector(x, a).to_vec(),
                });
            }
        }
    }

    /// Stage-indexed backups: stage k holds the vectors with k + 1 steps to
    /// go, built from stage k - 1 (zero value after the last step).
    fn finite_stages(&self, points: &[Vec<Belief>], horizon: usize) -> Vec<VectorSets> {
        let mut stages: Vec<VectorSets> = Vec::with_capacity(horizon);
        let empty: VectorSets = vec![Vec::new(); points.len()];
        for _ in 0..horizon {
            let prev = stages.last().unwrap_or(&empty);
            let mut next: VectorSets = Vec::with_capacity(points.len());
            for (xi, pts) in points.iter().enumerate() {
                let mut set: Vec<AlphaVector> = Vec::with_capacity(pts.len());
                for b in pts {
                    let v = self.backup(prev, b);
                    if !set.iter().any(|s| s.action == v.action && s.values == v.values) {
                        set.push(v);
                    }
                }
                self.keep_reports(&mut set, ManipState::ACTIVE[xi]);
                next.push(set);
            }
            stages.push(next);
        }
        stages
    }

    fn try_add(&self, pts: &mut Vec<Belief>, b: Belief) -> bool {
        if pts.len() >= self.cfg.max_points {
            return false;
        }
        let far = pts.iter().all(|q| {
            q.hidden.iter().zip(&b.hidden).map(|(u, v)| (u - v).abs()).sum::<f64>() > self.cfg.min_distance
        });
        if far {
            pts.push(b);
        }
        far
    }

    fn expand(&self, alphas: &[Vec<AlphaVector>], points: &mut [Vec<Belief>], rng: &mut seeding::Rng) -> bool {
        let m = self.model;
        let policy = Policy {
            stages: vec![alphas.to_vec()],
            horizon: None,
            iterations: 0,
            residual: 0.0,
            converged: false,
            belief_points: 0,
        };
        let snapshot: Vec<Belief> = points.iter().flatten().cloned().collect();
        let mut added = false;
        for b in &snapshot {
            let greedy = best_action(&policy, b).expect("every active state has vectors");
            for &a in m.legal(b.manip) {
                if m.action(a).is_report() {
                    continue;
                }
                let outs = m.manip_transition(b.manip, a);
                if a == greedy {
                    for &(x2, p) in outs {
                        if x2 == ManipState::Term || p == 0.0 {
                            continue;
                        }
                        for z in 0..m.n_observations() {
                            let zs = ObservationSym::from_index(z, m.n_hidden());
                            if observation_likelihood(b, a, zs, m) <= 0.0 {
                                continue;
                            }
                            if let Ok(nb) = belief_update(b, a, zs, x2, m) {
                                added |= self.try_add(&mut points[x2.index()], nb);
                            }
                        }
                    }
                } else {
                    let mut u: f64 = rng.random();
                    let mut x2 = outs[outs.len() - 1].0;
                    for &(xx, p) in outs {
                        if u < p {
                            x2 = xx;
                            break;
                        }
                        u -= p;
                    }
                    if x2 == ManipState::Term {
                        continue;
                    }
                    let probs: Vec<f64> = (0..m.n_observations())
                        .map(|z| observation_likelihood(b, a, ObservationSym::from_index(z, m.n_hidden()), m))
                        .collect();
                    let mut u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
                    let mut z = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                    for (i, &p) in probs.iter().enumerate() {
                        if p > 0.0 && u < p {
                            z = i;
                            break;
                        }
                        u -= p;
                    }
                    let zs = ObservationSym::from_index(z, m.n_hidden());
                    if let Ok(nb) = belief_update(b, a, zs, x2, m) {
                        added |= self.try_add(&mut points[x2.index()], nb);
                    }
                }
            }
        }
        added
    }
}

/// Point-based value iteration. Deterministic for a fixed `cfg.seed`.
pub fn solve(model: &PomdpModel, cfg: &SolverConfig) -> Result<Policy> {
    if !(cfg.precision > 0.0) || cfg.max_iter == 0 || cfg.max_points == 0 || cfg.horizon == Some(0) {
        return Err(Error::Config(
            "solver needs positive precision, iteration limit, point budget and horizon".into(),
        ));
    }
    let solver = Solver { model, cfg: *cfg };
    let mut rng = seeding::rng(cfg.seed, &[seeding::STREAM_SOLVER]);
    let mut points: Vec<Vec<Belief>> = ManipState::ACTIVE
        .iter()
        .map(|&x| vec![Belief::uniform(x, model.n_hidden())])
        .collect();
    let mut total = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let stages = if let Some(h) = cfg.horizon {
        let mut stages = Vec::new();
        for round in 0..=cfg.expansions {
            stages = solver.finite_stages(&points, h);
            total += h;
            residual = 0.0;
            converged = true;
            let Some(last) = stages.last() else { break };
            if round == cfg.expansions || !solver.expand(last, &mut points, &mut rng) {
                break;
            }
        }
        stages
    } else {
        let mut alphas = solver.initial_alphas();
        for round in 0..=cfg.expansions {
            let (it, r, c) = solver.iterate(&mut alphas, &points);
            total += it;
            residual = r;
            converged = c;
            if round == cfg.expansions || !solver.expand(&alphas, &mut points, &mut rng) {
                break;
            }
        }
        vec![alphas]
    };
    log::debug!(
        "solved {}-attribute model: {} sweeps, residual {:.2e}, {} points",
        model.n_attributes(),
        total,
        residual,
        points.iter().map(Vec::len).sum::<usize>()
    );
    Ok(Policy {
        stages,
        horizon: cfg.horizon,
        iterations: total,
        residual,
        converged,
        belief_points: points.iter().map(Vec::len).sum(),
    })
}
