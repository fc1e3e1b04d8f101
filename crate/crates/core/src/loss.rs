//! Cross-entropy losses, accuracy and one-vs-rest confusion counts.
//! Losses are in nats.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LossValue<T: Real> {
    pub value: f64,
    /// Gradient with respect to the pre-softmax logits.
    pub grad: Tensor<T>,
}

/// Mean categorical cross-entropy of softmax outputs `probs` against one-hot
/// targets. The gradient is the fused softmax + cross-entropy form
/// `(probs - one_hot) / batch`.
pub fn categorical_cross_entropy<T: Real>(probs: &Tensor<T>, one_hot: &Tensor<T>) -> Result<LossValue<T>> {
    let &[b, k] = probs.dims() else {
        return Err(Error::shape(format!("probabilities must be [batch, classes], got {}", probs.shape())));
    };
    if one_hot.shape() != probs.shape() {
        return Err(Error::shape(format!(
            "targets {} do not match predictions {}",
            one_hot.shape(),
            probs.shape()
        )));
    }
    let mut total = 0.0;
    for (row, (p, y)) in probs.data().chunks(k).zip(one_hot.data().chunks(k)).enumerate() {
        let hot = y.iter().filter(|&&v| v == T::one()).count();
        let cold = y.iter().filter(|&&v| v == T::zero()).count();
        if hot != 1 || hot + cold != k {
            return Err(Error::input(format!("target row {row} is not one-hot")));
        }
        let t = y.iter().position(|&v| v == T::one()).unwrap();
        total -= p[t].to_f64_lossy().clamp(PROB_FLOOR, 1.0).ln();
    }
    let inv_b = T::from_f64_lossy(1.0 / b as f64);
    let grad = probs.sub(one_hot)?.map(|v| v * inv_b);
    Ok(LossValue {
        value: total / b as f64,
        grad,
    })
}

/// [`categorical_cross_entropy`] with integer class labels.
pub fn cross_entropy_with_labels<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<LossValue<T>> {
    let one_hot = one_hot(labels, probs.dims().get(1).copied().unwrap_or(0))?;
    categorical_cross_entropy(probs, &one_hot)
}

pub fn one_hot<T: Real>(labels: &[usize], class_count: usize) -> Result<Tensor<T>> {
    if labels.is_empty() || class_count == 0 {
        return Err(Error::input("one-hot encoding needs labels and classes"));
    }
    let mut t = Tensor::zeros(&[labels.len(), class_count])?;
    for (i, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::input(format!("label {l} is out of range for {class_count} classes")));
        }
        t.data_mut()[i * class_count + l] = T::one();
    }
    Ok(t)
}

/// Binary cross-entropy over `N` outputs:
/// `-(1/N) * sum(y * ln(p) + (1 - y) * ln(1 - p))`, with `p` clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn binary_cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::input("predictions and targets must be non-empty and equally long"));
    }
    let mut sum = 0.0;
    for (&p, &y) in pred.iter().zip(target) {
        if y != 0.0 && y != 1.0 {
            return Err(Error::input(format!("binary target {y} is not 0 or 1")));
        }
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        sum += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(-sum / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `(TP + TN) / (TP + TN + FP + FN)`.
    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// One-vs-rest counts for every class.
pub fn confusion_counts(pred: &[usize], truth: &[usize], class_count: usize) -> Result<Vec<ConfusionCounts>> {
    if pred.len() != truth.len() {
        return Err(Error::input("prediction and truth lengths differ"));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= class_count) {
        return Err(Error::input(format!("label {bad} is out of range for {class_count} classes")));
    }
    let mut counts = vec![ConfusionCounts::default(); class_count];
    for (c, cc) in counts.iter_mut().enumerate() {
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => cc.tp += 1,
                (true, false) => cc.fp += 1,
                (false, true) => cc.fn_ += 1,
                (false, false) => cc.tn += 1,
            }
        }
    }
    Ok(counts)
}

/// Fraction of predictions equal to the truth.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::input("accuracy of an empty set is undefined"));
    }
    if pred.len() != truth.len() {
        return Err(Error::input("prediction and truth lengths differ"));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}
