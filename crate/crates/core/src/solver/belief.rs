use crate::error::{Error, Result};
use crate::pomdp::{HiddenState, ManipState, ObservationSym, PomdpModel};

/// Mixed-observability belief: known manipulation state, distribution over
/// the hidden attribute assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub manip: ManipState,
    pub hidden: Vec<f64>,
}

impl Belief {
    pub fn uniform(manip: ManipState, n_hidden: usize) -> Self {
        Belief {
            manip,
            hidden: vec![1.0 / n_hidden as f64; n_hidden],
        }
    }

    pub fn new(manip: ManipState, hidden: Vec<f64>) -> Result<Self> {
        if hidden.is_empty() || hidden.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Belief("belief entries must be finite and non-negative".into()));
        }
        let s: f64 = hidden.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Belief(format!("belief sums to {s}")));
        }
        Ok(Belief { manip, hidden })
    }

    /// Most likely hidden state, lowest index on ties.
    pub fn argmax(&self) -> HiddenState {
        let mut best = 0;
        for (i, &p) in self.hidden.iter().enumerate() {
            if p > self.hidden[best] {
                best = i;
            }
        }
        HiddenState(best)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.hidden.iter().zip(v).map(|(b, a)| b * a).sum()
    }
}

/// Pr(z | b, a), marginalised over the hidden state.
pub fn observation_likelihood(b: &Belief, a: usize, z: ObservationSym, model: &PomdpModel) -> f64 {
    let zi = z.index(model.n_hidden());
    b.hidden
        .iter()
        .enumerate()
        .map(|(y, p)| p * model.observation_row(a, HiddenState(y))[zi])
        .sum()
}

/// Bayes update after taking `a`, arriving in `x_next` and observing `z`.
pub fn belief_update(
    b: &Belief,
    a: usize,
    z: ObservationSym,
    x_next: ManipState,
    model: &PomdpModel,
) -> Result<Belief> {
    if b.hidden.len() != model.n_hidden() {
        return Err(Error::Belief(format!(
            "belief over {} states used with a model over {}",
            b.hidden.len(),
            model.n_hidden()
        )));
    }
    let zi = z.index(model.n_hidden());
    if zi >= model.n_observations() {
        return Err(Error::Belief(format!("observation index {zi} out of range")));
    }
    let mut post: Vec<f64> = b
        .hidden
        .iter()
        .enumerate()
        .map(|(y, p)| p * model.observation_row(a, HiddenState(y))[zi])
        .collect();
    let norm: f64 = post.iter().sum();
    if !(norm > 0.0) {
        return Err(Error::Belief(format!(
            "observation {zi} has zero probability under the current belief"
        )));
    }
    post.iter_mut().for_each(|p| *p /= norm);
    Ok(Belief {
        manip: x_next,
        hidden: post,
    })
}
