//! Document classification probe: k-fold cross-validated softmax regression
//! over composed document embeddings.
//!
//! The probe is intentionally small: embeddings are the object under test,
//! so the classifier on top is plain SGD softmax regression with a fixed
//! pass count and step size. Folds are stratified by dealing each class's
//! documents round-robin, every document is predicted exactly once, and all
//! predictions are pooled before computing metrics.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::EvalError;
use crate::compose::{doc_embedding, ComposeError};
use crate::corpus::EncodedDocument;
use crate::trainer::EmbeddingModel;
use crate::weighting::{IdfTable, WeightScheme};

const PASSES: usize = 100;
const STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Unweighted mean F1 over the classes present in the truth labels.
    pub macro_f1: f64,
    /// F1 of the pooled per-class counts; equals accuracy for single-label
    /// classification.
    pub micro_f1: f64,
    /// Support-weighted mean F1 over the classes present in the truth
    /// labels.
    pub weighted_f1: f64,
}

/// Pooled multi-class metrics. A class absent from `truth` contributes
/// nothing to the macro and weighted averages even if it was predicted.
///
/// Panics if the slices are empty or differ in length.
pub fn classification_metrics(truth: &[usize], pred: &[usize]) -> ClassificationMetrics {
    assert!(!truth.is_empty(), "metrics need at least one prediction");
    assert_eq!(truth.len(), pred.len(), "each truth label needs a prediction");
    let classes = truth.iter().chain(pred.iter()).max().unwrap() + 1;
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fnn = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        support[t] += 1;
        if t == p {
            tp[t] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fnn: usize| -> f64 {
        let denom = 2 * tp + fp + fnn;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let truth_classes: Vec<usize> = (0..classes).filter(|&c| support[c] > 0).collect();
    let macro_f1 = truth_classes.iter().map(|&c| f1(tp[c], fp[c], fnn[c])).sum::<f64>()
        / truth_classes.len() as f64;
    let weighted_f1 = truth_classes
        .iter()
        .map(|&c| support[c] as f64 * f1(tp[c], fp[c], fnn[c]))
        .sum::<f64>()
        / truth.len() as f64;
    let total_tp: usize = tp.iter().sum();
    let total_fp: usize = fp.iter().sum();
    let total_fn: usize = fnn.iter().sum();
    ClassificationMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1,
        micro_f1: f1(total_tp, total_fp, total_fn),
        weighted_f1,
    }
}

struct SoftmaxModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SoftmaxModel {
    fn zeros(classes: usize, dim: usize) -> Self {
        Self { classes, dim, weights: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for c in 0..self.classes {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            out[c] = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut logits = vec![0.0; self.classes];
        self.logits(x, &mut logits);
        argmax(&logits)
    }
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn train_softmax(
    samples: &[(usize, &[f64])],
    classes: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> SoftmaxModel {
    let mut model = SoftmaxModel::zeros(classes, dim);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut logits = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    for _ in 0..PASSES {
        order.shuffle(rng);
        for &i in &order {
            let (label, x) = samples[i];
            model.logits(x, &mut logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for c in 0..classes {
                probs[c] = (logits[c] - max).exp();
                denom += probs[c];
            }
            for c in 0..classes {
                let grad = probs[c] / denom - if c == label { 1.0 } else { 0.0 };
                model.bias[c] -= STEP * grad;
                let row = &mut model.weights[c * dim..(c + 1) * dim];
                for (w, &v) in row.iter_mut().zip(x) {
                    *w -= STEP * grad * v;
                }
            }
        }
    }
    model
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub folds: usize,
    /// Documents embedded and predicted.
    pub evaluated: usize,
    /// Documents without an embeddable prefix.
    pub skipped_docs: usize,
    pub classes: usize,
    pub metrics: ClassificationMetrics,
}

/// Cross-validates a softmax-regression probe on document embeddings
/// against the documents' category labels.
pub fn classify_eval(
    model: &EmbeddingModel,
    docs: &[EncodedDocument],
    folds: usize,
    prefix_len: usize,
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
    seed: u64,
) -> Result<ClassifyReport, EvalError> {
    if folds < 2 {
        return Err(EvalError::InvalidParameter("folds must be at least 2".to_string()));
    }
    let mut features: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut skipped_docs = 0usize;
    for doc in docs {
        match doc_embedding(model, doc, prefix_len, scheme, idf) {
            Ok(v) => features.push((doc.category, v.values)),
            Err(ComposeError::NoKnownTokens { .. }) => skipped_docs += 1,
            Err(other) => return Err(other.into()),
        }
    }
    if features.is_empty() {
        return Err(EvalError::NoUsableInput("no document could be embedded".to_string()));
    }
    let classes = features.iter().map(|&(c, _)| c).max().unwrap() + 1;
    let dim = features[0].1.len();

    let mut class_counts: HashMap<usize, usize> = HashMap::new();
    for &(c, _) in &features {
        *class_counts.entry(c).or_insert(0) += 1;
    }
    for (&c, &n) in &class_counts {
        if n < folds {
            log::warn!("class {c} has only {n} documents for {folds} folds");
        }
    }

    // Stratified assignment: the i-th document of each class goes to fold
    // i mod folds, in document order.
    let mut dealt: HashMap<usize, usize> = HashMap::new();
    let fold_of: Vec<usize> = features
        .iter()
        .map(|&(c, _)| {
            let i = dealt.entry(c).or_insert(0);
            let fold = *i % folds;
            *i += 1;
            fold
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for fold in 0..folds {
        let train: Vec<(usize, &[f64])> = features
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|((c, x), _)| (*c, x.as_slice()))
            .collect();
        let test: Vec<(usize, &[f64])> = features
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f == fold)
            .map(|((c, x), _)| (*c, x.as_slice()))
            .collect();
        if test.is_empty() {
            continue;
        }
        if train.is_empty() {
            log::warn!("fold {fold} has no training documents; its test documents are skipped");
            continue;
        }
        let probe = train_softmax(&train, classes, dim, &mut rng);
        for (label, x) in test {
            truth.push(label);
            pred.push(probe.predict(x));
        }
    }
    if truth.is_empty() {
        return Err(EvalError::NoUsableInput("no fold produced predictions".to_string()));
    }
    Ok(ClassifyReport {
        folds,
        evaluated: truth.len(),
        skipped_docs,
        classes,
        metrics: classification_metrics(&truth, &pred),
    })
}
