//! Reward shaping from perception quality and interaction experience, and
//! the online episode loop that uses it.

mod episode;

pub use episode::{
    episode_feedback, run_episode, Controller, EpisodeRecord, EpisodeStep, FeedbackMode, PolicyController,
    MAX_EPISODE_STEPS,
};

use std::collections::BTreeMap;

use crate::domain::{AttributeId, BehaviorId};
use crate::error::{Error, Result};

pub const DEFAULT_DELTA: u64 = 100;

/// Shannon entropy in bits with 0·log 0 = 0.
pub fn entropy(row: &[f64]) -> f64 {
    let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Labeled instances gathered per (attribute, behavior).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExperienceLedger {
    counts: BTreeMap<(AttributeId, BehaviorId), u64>,
    delta: u64,
}

impl Default for ExperienceLedger {
    fn default() -> Self {
        ExperienceLedger::new(DEFAULT_DELTA).expect("default delta is positive")
    }
}

impl ExperienceLedger {
    pub fn new(delta: u64) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Config("experience scale delta must be positive".into()));
        }
        Ok(ExperienceLedger {
            counts: BTreeMap::new(),
            delta,
        })
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn count(&self, p: AttributeId, b: BehaviorId) -> u64 {
        self.counts.get(&(p, b)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, p: AttributeId, b: BehaviorId, n: u64) {
        *self.counts.entry((p, b)).or_insert(0) += n;
    }

    pub fn iter(&self) -> impl Iterator<Item = ((AttributeId, BehaviorId), u64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}

/// min(count, δ−1)/δ, always in [0, 1).
pub fn interaction_experience(p: AttributeId, b: BehaviorId, ledger: &ExperienceLedger) -> f64 {
    let d = ledger.delta();
    ledger.count(p, b).min(d - 1) as f64 / d as f64
}

/// Mean experience of `b` across the queried attributes.
pub fn mean_experience(attributes: &[AttributeId], b: BehaviorId, ledger: &ExperienceLedger) -> f64 {
    if attributes.is_empty() {
        return 0.0;
    }
    attributes.iter().map(|&p| interaction_experience(p, b, ledger)).sum::<f64>() / attributes.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ShapingParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(ShapingParams { alpha, beta })
    }

    pub fn off() -> Self {
        ShapingParams { alpha: 0.0, beta: 0.0 }
    }
}

/// real + α·ent − β·ie_mean. Only applied to exploratory actions.
pub fn shaped_reward(real: f64, ent: f64, ie_mean: f64, params: &ShapingParams) -> f64 {
    real + params.alpha * ent - params.beta * ie_mean
}
