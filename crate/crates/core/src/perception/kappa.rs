use rand::seq::SliceRandom;

use crate::domain::{AttributeId, ObjectId};
use crate::seeding;

use super::classifier::{train_context_classifier, ClassifierConfig};

/// Labeled features for one (attribute, context), with the object each
/// example came from.
#[derive(Debug, Clone, Default)]
pub struct ContextExamples<'a> {
    pub features: Vec<&'a [f64]>,
    pub labels: Vec<bool>,
    pub objects: Vec<ObjectId>,
}

impl<'a> ContextExamples<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: &'a [f64], y: bool, object: ObjectId) {
        self.features.push(x);
        self.labels.push(y);
        self.objects.push(object);
    }

    pub fn pairs(&self) -> Vec<(&'a [f64], bool)> {
        self.features.iter().copied().zip(self.labels.iter().copied()).collect()
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Vec<(&'a [f64], bool)> {
        (0..self.len())
            .filter(|&i| keep(i))
            .map(|i| (self.features[i], self.labels[i]))
            .collect()
    }
}

/// Cross-validated reliability weight of a context classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextWeight {
    pub attribute: AttributeId,
    pub context: usize,
    pub kappa: f64,
}

impl ContextWeight {
    /// Negative agreement carries no weight in fusion.
    pub fn fusion_weight(&self) -> f64 {
        self.kappa.max(0.0)
    }
}

/// Cohen's kappa between predicted and true binary labels.
///
/// Returns 0 when chance agreement is already perfect (a single class on
/// both sides) or the input is empty.
pub fn cohen_kappa(predicted: &[bool], actual: &[bool]) -> f64 {
    let n = predicted.len().min(actual.len());
    if n == 0 {
        return 0.0;
    }
    let mut table = [[0usize; 2]; 2];
    for (p, a) in predicted.iter().zip(actual) {
        table[usize::from(*a)][usize::from(*p)] += 1;
    }
    let n = n as f64;
    let po = (table[0][0] + table[1][1]) as f64 / n;
    let actual_pos = (table[1][0] + table[1][1]) as f64 / n;
    let pred_pos = (table[0][1] + table[1][1]) as f64 / n;
    let pe = actual_pos * pred_pos + (1.0 - actual_pos) * (1.0 - pred_pos);
    if (1.0 - pe).abs() < 1e-12 {
        return 0.0;
    }
    (po - pe) / (1.0 - pe)
}

/// Assigns each example to a fold so that all examples of one object share
/// a fold. Objects are dealt to folds round-robin, negatives first, so each
/// class is spread over as many folds as it has objects. `labels[i]` is the
/// label of example `i`; an object's class is taken from its first example.
/// Returns `(fold per example, number of folds)`.
pub fn object_folds(objects: &[ObjectId], labels: &[bool], folds: usize, seed: u64) -> (Vec<usize>, usize) {
    let mut distinct: Vec<(ObjectId, bool)> = Vec::new();
    for (&o, &y) in objects.iter().zip(labels) {
        if !distinct.iter().any(|d| d.0 == o) {
            distinct.push((o, y));
        }
    }
    distinct.sort();
    let k = folds.min(distinct.len());
    if k == 0 {
        return (vec![0; objects.len()], 0);
    }
    distinct.shuffle(&mut seeding::rng(seed, &[seeding::STREAM_FOLDS]));
    distinct.sort_by_key(|d| d.1);
    let fold_of = |o: &ObjectId| distinct.iter().position(|d| d.0 == *o).unwrap() % k;
    (objects.iter().map(fold_of).collect(), k)
}

/// Kappa of object-level k-fold cross-validated predictions.
///
/// The fold count drops to leave-one-object-out when fewer than `folds`
/// objects are present; with a single class or fewer than two objects the
/// weight is 0.
pub fn kappa_weight(
    attribute: AttributeId,
    context: usize,
    examples: &ContextExamples<'_>,
    folds: usize,
    fold_seed: u64,
    cfg: &ClassifierConfig,
) -> ContextWeight {
    let zero = ContextWeight {
        attribute,
        context,
        kappa: 0.0,
    };
    let has_pos = examples.labels.iter().any(|&y| y);
    let has_neg = examples.labels.iter().any(|&y| !y);
    if !(has_pos && has_neg) || folds < 2 {
        return zero;
    }
    let (fold_of, k) = object_folds(&examples.objects, &examples.labels, folds, fold_seed);
    if k < 2 {
        return zero;
    }
    let mut predicted = vec![false; examples.len()];
    for f in 0..k {
        let train = examples.subset(|i| fold_of[i] != f);
        let clf = match train_context_classifier(attribute, context, &train, cfg) {
            Ok(c) => c,
            Err(_) => return zero,
        };
        for i in (0..examples.len()).filter(|&i| fold_of[i] == f) {
            predicted[i] = clf.predict(examples.features[i]);
        }
    }
    ContextWeight {
        attribute,
        context,
        kappa: cohen_kappa(&predicted, &examples.labels),
    }
}
