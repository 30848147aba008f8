use crate::domain::AttributeId;
use crate::error::{Error, Result};

/// Fixed-schedule settings for the logistic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub iterations: usize,
    pub step: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            iterations: 200,
            step: 0.5,
            l2: 0.05,
        }
    }
}

/// L2-regularised logistic model for one (attribute, context) pair.
///
/// Inputs are standardised with the training mean and scale before the
/// linear rule is applied. A classifier trained without both classes is
/// degenerate and answers 0.5 everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextClassifier {
    pub attribute: AttributeId,
    pub context: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pub trained_on: usize,
}

impl ContextClassifier {
    pub fn degenerate(attribute: AttributeId, context: usize, trained_on: usize) -> Self {
        ContextClassifier {
            attribute,
            context,
            weights: Vec::new(),
            bias: 0.0,
            mean: Vec::new(),
            scale: Vec::new(),
            trained_on,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.weights.is_empty()
    }

    /// Pr(attribute holds | x).
    pub fn probability(&self, x: &[f64]) -> f64 {
        if self.is_degenerate() || x.len() != self.weights.len() {
            return 0.5;
        }
        let z = self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>();
        sigmoid(z)
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) > 0.5
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits a classifier by full-batch gradient descent.
pub fn train_context_classifier(
    attribute: AttributeId,
    context: usize,
    examples: &[(&[f64], bool)],
    cfg: &ClassifierConfig,
) -> Result<ContextClassifier> {
    let n = examples.len();
    for (x, _) in examples {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature in classifier input".into()));
        }
    }
    let has_pos = examples.iter().any(|(_, y)| *y);
    let has_neg = examples.iter().any(|(_, y)| !*y);
    if !(has_pos && has_neg) {
        return Ok(ContextClassifier::degenerate(attribute, context, n));
    }
    let d = examples[0].0.len();
    if examples.iter().any(|(x, _)| x.len() != d) {
        return Err(Error::Data("classifier inputs have mixed dimensionality".into()));
    }

    let mut mean = vec![0.0; d];
    for (x, _) in examples {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for (x, _) in examples {
        for ((s, v), m) in scale.iter_mut().zip(x.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let xs: Vec<Vec<f64>> = examples
        .iter()
        .map(|(x, _)| x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let ys: Vec<f64> = examples.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - y;
            gb += err;
            for (g, v) in grad.iter_mut().zip(x) {
                *g += err * v;
            }
        }
        let inv = 1.0 / n as f64;
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= cfg.step * (g * inv + cfg.l2 * *wi);
        }
        b -= cfg.step * gb * inv;
    }

    Ok(ContextClassifier {
        attribute,
        context,
        weights: w,
        bias: b,
        mean,
        scale,
        trained_on: n,
    })
}
