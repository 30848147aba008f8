//! Perception models: per-context logistic classifiers, kappa-weighted
//! fusion across the contexts of a behavior, and the 2×2 confusion
//! matrices that become the POMDP observation channel.

mod classifier;
mod kappa;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::{Dataset, FeatureInstance};
use crate::domain::{AttributeId, BehaviorId, Vocabulary};
use crate::error::{Error, Result};
use crate::seeding;

pub use classifier::{train_context_classifier, ClassifierConfig, ContextClassifier};
pub use kappa::{cohen_kappa, kappa_weight, object_folds, ContextExamples, ContextWeight};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    pub folds: usize,
    pub fold_seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            folds: 5,
            fold_seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Estimated observation channel Pr(observed | true) for one attribute
/// under one behavior. Rows are the true value, columns the observed value,
/// both ordered {false, true}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMatrix {
    pub attribute: AttributeId,
    pub behavior: BehaviorId,
    pub cells: [[f64; 2]; 2],
    pub support: usize,
}

impl ConfusionMatrix {
    pub fn uniform(attribute: AttributeId, behavior: BehaviorId) -> Self {
        ConfusionMatrix {
            attribute,
            behavior,
            cells: [[0.5, 0.5], [0.5, 0.5]],
            support: 0,
        }
    }

    /// Row-normalises arbitrary non-negative rows.
    pub fn from_rows(attribute: AttributeId, behavior: BehaviorId, rows: [[f64; 2]; 2]) -> Result<Self> {
        let mut cells = [[0.0; 2]; 2];
        for (r, row) in rows.iter().enumerate() {
            let s = row[0] + row[1];
            if !(s > 0.0) || row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Data(format!("confusion row {r} is not a valid distribution")));
            }
            cells[r] = [row[0] / s, row[1] / s];
        }
        Ok(ConfusionMatrix {
            attribute,
            behavior,
            cells,
            support: 0,
        })
    }

    /// Laplace-smoothed (pseudo-count 1 per cell), row-normalised counts
    /// indexed `[true][predicted]`.
    pub fn from_counts(attribute: AttributeId, behavior: BehaviorId, counts: [[usize; 2]; 2]) -> Self {
        let mut cells = [[0.0; 2]; 2];
        for r in 0..2 {
            let total = (counts[r][0] + counts[r][1]) as f64 + 2.0;
            cells[r] = [
                (counts[r][0] as f64 + 1.0) / total,
                (counts[r][1] as f64 + 1.0) / total,
            ];
        }
        ConfusionMatrix {
            attribute,
            behavior,
            cells,
            support: counts.iter().flatten().sum(),
        }
    }

    /// Uniform when held-out predictions did no better than chance
    /// (tn + tp ≤ 1). Below-chance cross-validation on few objects comes
    /// from leaving whole objects out, not from an inverted sensor, so it
    /// must not be read as evidence for the opposite value.
    pub fn or_uniform_below_chance(self) -> Self {
        if self.cells[0][0] + self.cells[1][1] <= 1.0 {
            ConfusionMatrix {
                cells: [[0.5, 0.5], [0.5, 0.5]],
                ..self
            }
        } else {
            self
        }
    }

    /// Pr(observed | truth).
    pub fn prob(&self, truth: bool, observed: bool) -> f64 {
        self.cells[usize::from(truth)][usize::from(observed)]
    }

    pub fn is_uniform(&self) -> bool {
        self.cells.iter().flatten().all(|&c| c == 0.5)
    }
}

/// Classifiers and fusion weights for every context of one behavior,
/// all for the same attribute.
#[derive(Debug, Clone)]
pub struct BehaviorModel {
    pub attribute: AttributeId,
    pub behavior: BehaviorId,
    pub members: Vec<(ContextClassifier, ContextWeight)>,
}

impl BehaviorModel {
    /// True when no context carries fusion weight.
    pub fn is_constant(&self) -> bool {
        self.members.iter().all(|(_, w)| w.fusion_weight() == 0.0)
    }

    /// Fused Pr(attribute holds) from one execution's instances.
    pub fn fuse(&self, vocab: &Vocabulary, instances: &[&FeatureInstance]) -> Result<f64> {
        fuse_prediction(self, vocab, instances)
    }

    pub fn predict(&self, vocab: &Vocabulary, instances: &[&FeatureInstance]) -> Result<bool> {
        Ok(self.fuse(vocab, instances)? > 0.5)
    }
}

/// Kappa-weighted mean of the context classifiers' probabilities.
///
/// Falls back to 0.5 when every supplied context has zero weight.
pub fn fuse_prediction(
    model: &BehaviorModel,
    vocab: &Vocabulary,
    instances: &[&FeatureInstance],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for inst in instances {
        let c = vocab.context(inst.context);
        if c.behavior != model.behavior {
            return Err(Error::Data(format!(
                "instance from context {} fused under behavior {}",
                vocab.context_name(inst.context),
                vocab.behavior_name(model.behavior)
            )));
        }
        if let Some((clf, w)) = model.members.iter().find(|(clf, _)| clf.context == inst.context) {
            let weight = w.fusion_weight();
            num += weight * clf.probability(&inst.features);
            den += weight;
        }
    }
    if den > 0.0 {
        Ok((num / den).clamp(0.0, 1.0))
    } else {
        Ok(0.5)
    }
}

fn context_examples<'a>(data: &'a Dataset, execs: &[(usize, bool)], context: usize) -> ContextExamples<'a> {
    let mut out = ContextExamples::default();
    for &(e, y) in execs {
        let exec = data.execution(e);
        if let Some(&i) = exec.instances.iter().find(|&&i| data.instance(i).context == context) {
            out.push(&data.instance(i).features, y, exec.object);
        }
    }
    out
}

/// Trains the classifiers and kappa weights of one (attribute, behavior)
/// from the given labeled executions.
pub fn train_behavior_model(
    data: &Dataset,
    attribute: AttributeId,
    behavior: BehaviorId,
    execs: &[(usize, bool)],
    cfg: &PerceptionConfig,
) -> Result<BehaviorModel> {
    let vocab = data.vocab();
    let mut members = Vec::new();
    for &ctx in vocab.behavior_contexts(behavior) {
        let ex = context_examples(data, execs, ctx);
        let clf = train_context_classifier(attribute, ctx, &ex.pairs(), &cfg.classifier)?;
        let seed = seeding::derive(cfg.fold_seed, &[attribute.0 as u64, ctx as u64, 1]);
        let w = kappa_weight(attribute, ctx, &ex, cfg.folds, seed, &cfg.classifier);
        members.push((clf, w));
    }
    Ok(BehaviorModel {
        attribute,
        behavior,
        members,
    })
}

/// Object-level k-fold estimate of the confusion matrix for (attribute,
/// behavior). Held-out executions are classified by thresholding the fused
/// prediction at 0.5; cells are Laplace-smoothed and row-normalised, and a
/// below-chance result becomes uniform.
pub fn estimate_confusion_matrix(
    attribute: AttributeId,
    behavior: BehaviorId,
    data: &Dataset,
    cfg: &PerceptionConfig,
) -> Result<ConfusionMatrix> {
    Ok(estimate_with_audit(attribute, behavior, data, cfg)?.0)
}

/// Fold assignment of each held-out execution, exposed so callers can audit
/// that no object straddles a train/test boundary.
#[derive(Debug, Clone, Default)]
pub struct FoldAudit {
    /// `(execution, fold)` for every labeled execution considered.
    pub assignments: Vec<(usize, usize)>,
    /// Executions used for training in each fold.
    pub train_sets: Vec<Vec<usize>>,
}

pub fn estimate_with_audit(
    attribute: AttributeId,
    behavior: BehaviorId,
    data: &Dataset,
    cfg: &PerceptionConfig,
) -> Result<(ConfusionMatrix, FoldAudit)> {
    let labeled = data.labeled_executions(attribute, behavior);
    let mut audit = FoldAudit::default();
    if labeled.is_empty() || cfg.folds < 2 {
        return Ok((ConfusionMatrix::uniform(attribute, behavior), audit));
    }
    let objects: Vec<_> = labeled.iter().map(|&(e, _)| data.execution(e).object).collect();
    let labels: Vec<bool> = labeled.iter().map(|&(_, y)| y).collect();
    let seed = seeding::derive(cfg.fold_seed, &[attribute.0 as u64, behavior.0 as u64]);
    let (fold_of, k) = object_folds(&objects, &labels, cfg.folds, seed);
    if k < 2 {
        return Ok((ConfusionMatrix::uniform(attribute, behavior), audit));
    }
    let vocab = data.vocab();
    let mut counts = [[0usize; 2]; 2];
    for f in 0..k {
        let train: Vec<(usize, bool)> = labeled
            .iter()
            .zip(&fold_of)
            .filter(|(_, &fo)| fo != f)
            .map(|(&x, _)| x)
            .collect();
        audit.train_sets.push(train.iter().map(|&(e, _)| e).collect());
        let model = train_behavior_model(data, attribute, behavior, &train, cfg)?;
        for (&(e, truth), _) in labeled.iter().zip(&fold_of).filter(|(_, &fo)| fo == f) {
            audit.assignments.push((e, f));
            let insts: Vec<&FeatureInstance> =
                data.execution(e).instances.iter().map(|&i| data.instance(i)).collect();
            let predicted = model.predict(vocab, &insts)?;
            counts[usize::from(truth)][usize::from(predicted)] += 1;
        }
    }
    let theta = ConfusionMatrix::from_counts(attribute, behavior, counts).or_uniform_below_chance();
    Ok((theta, audit))
}

/// Everything the robot currently believes about its perception: fused
/// classifiers for producing observations and confusion matrices for the
/// planner, per (attribute, behavior).
#[derive(Debug, Clone)]
pub struct PerceptionModel {
    n_behaviors: usize,
    n_attributes: usize,
    models: Vec<Option<BehaviorModel>>,
    thetas: Vec<Option<ConfusionMatrix>>,
}

impl PerceptionModel {
    /// Trains on everything labeled in `data`, for the given attributes.
    pub fn train(data: &Dataset, attributes: &[AttributeId], cfg: &PerceptionConfig) -> Result<Self> {
        let vocab = data.vocab();
        let nb = vocab.n_behaviors();
        let na = vocab.n_attributes();
        let pairs: Vec<(AttributeId, BehaviorId)> = attributes
            .iter()
            .flat_map(|&p| vocab.all_behaviors().map(move |b| (p, b)))
            .collect();
        let trained: Vec<(AttributeId, BehaviorId, BehaviorModel, ConfusionMatrix)> = pairs
            .par_iter()
            .map(|&(p, b)| {
                let model = train_behavior_model(data, p, b, data.labeled_executions(p, b), cfg)?;
                let mut theta = estimate_confusion_matrix(p, b, data, cfg)?;
                // A model with no weighted context always fuses to 0.5, so its
                // observations are constant and carry nothing.
                if model.is_constant() {
                    theta = ConfusionMatrix::uniform(p, b);
                }
                Ok((p, b, model, theta))
            })
            .collect::<Result<_>>()?;
        let mut out = PerceptionModel {
            n_behaviors: nb,
            n_attributes: na,
            models: vec![None; na * nb],
            thetas: vec![None; na * nb],
        };
        for (p, b, m, t) in trained {
            let i = p.index() * nb + b.index();
            out.models[i] = Some(m);
            out.thetas[i] = Some(t);
        }
        Ok(out)
    }

    /// Uniform confusion matrices and zero-weight classifiers: the robot
    /// without any labeled data.
    pub fn uninformed(vocab: &Vocabulary, attributes: &[AttributeId]) -> Self {
        let nb = vocab.n_behaviors();
        let na = vocab.n_attributes();
        let mut out = PerceptionModel {
            n_behaviors: nb,
            n_attributes: na,
            models: vec![None; na * nb],
            thetas: vec![None; na * nb],
        };
        for &p in attributes {
            for b in vocab.all_behaviors() {
                let i = p.index() * nb + b.index();
                out.thetas[i] = Some(ConfusionMatrix::uniform(p, b));
                out.models[i] = Some(BehaviorModel {
                    attribute: p,
                    behavior: b,
                    members: Vec::new(),
                });
            }
        }
        out
    }

    fn slot(&self, p: AttributeId, b: BehaviorId) -> usize {
        p.index() * self.n_behaviors + b.index()
    }

    pub fn theta(&self, p: AttributeId, b: BehaviorId) -> Option<&ConfusionMatrix> {
        if p.index() >= self.n_attributes || b.index() >= self.n_behaviors {
            return None;
        }
        self.thetas[self.slot(p, b)].as_ref()
    }

    /// Overrides one confusion matrix.
    pub fn set_theta(&mut self, theta: ConfusionMatrix) {
        let i = self.slot(theta.attribute, theta.behavior);
        self.thetas[i] = Some(theta);
    }

    pub fn behavior_model(&self, p: AttributeId, b: BehaviorId) -> Option<&BehaviorModel> {
        if p.index() >= self.n_attributes || b.index() >= self.n_behaviors {
            return None;
        }
        self.models[self.slot(p, b)].as_ref()
    }

    pub fn thetas(&self) -> impl Iterator<Item = &ConfusionMatrix> {
        self.thetas.iter().flatten()
    }
}

/// Orders attributes by how well any behavior can detect them: highest
/// context kappa first, then more positive examples, then name.
pub fn rank_attribute_learnability(
    data: &Dataset,
    candidates: &[AttributeId],
    cfg: &PerceptionConfig,
) -> Vec<AttributeId> {
    let vocab = data.vocab();
    let mut scored: Vec<(AttributeId, f64, usize)> = candidates
        .iter()
        .map(|&p| {
            let mut best = 0.0f64;
            let mut positives = 0;
            for b in vocab.all_behaviors() {
                let execs = data.labeled_executions(p, b);
                positives += execs.iter().filter(|(_, y)| *y).count();
                for &ctx in vocab.behavior_contexts(b) {
                    let ex = context_examples(data, execs, ctx);
                    let seed = seeding::derive(cfg.fold_seed, &[p.0 as u64, ctx as u64, 1]);
                    best = best.max(kappa_weight(p, ctx, &ex, cfg.folds, seed, &cfg.classifier).kappa);
                }
            }
            (p, best, positives)
        })
        .collect();
    rank_scored(&mut scored, vocab);
    scored.into_iter().map(|(p, _, _)| p).collect()
}

fn rank_scored(scored: &mut [(AttributeId, f64, usize)], vocab: &Vocabulary) {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(b.2.cmp(&a.2))
            .then_with(|| vocab.attribute_name(a.0).cmp(vocab.attribute_name(b.0)))
    });
}
