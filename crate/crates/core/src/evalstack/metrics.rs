use serde::{Deserialize, Serialize};

use super::{EvalError, NUM_CLASSES};
use crate::lexmodel::SentimentClass;

/// Rows are true classes, columns predicted classes, both in class order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[SentimentClass], preds: &[SentimentClass]) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in truths.iter().zip(preds) {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn truth_count(&self, class: SentimentClass) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn predicted_count(&self, class: SentimentClass) -> u64 {
        self.counts.iter().map(|row| row[class.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: SentimentClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    /// Classes averaged into the macro scores.
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics averaged over the classes that occur in `truths` or `preds`.
pub fn confusion_and_metrics(
    truths: &[SentimentClass],
    preds: &[SentimentClass],
) -> Result<(ConfusionMatrix, MetricsReport), EvalError> {
    let labels: Vec<SentimentClass> = SentimentClass::ORDER
        .into_iter()
        .filter(|c| truths.contains(c) || preds.contains(c))
        .collect();
    confusion_and_metrics_with_labels(truths, preds, &labels)
}

/// Metrics with the macro average taken over exactly `labels`; a listed
/// class that never occurs scores 0 and still counts toward the average.
pub fn confusion_and_metrics_with_labels(
    truths: &[SentimentClass],
    preds: &[SentimentClass],
    labels: &[SentimentClass],
) -> Result<(ConfusionMatrix, MetricsReport), EvalError> {
    if truths.len() != preds.len() {
        return Err(EvalError::LengthMismatch(truths.len(), preds.len()));
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let m = ConfusionMatrix::from_pairs(truths, preds);
    let per_class: Vec<ClassMetrics> = labels
        .iter()
        .map(|&class| {
            let tp = m.counts[class.index()][class.index()];
            let precision = ratio(tp, m.predicted_count(class));
            let recall = ratio(tp, m.truth_count(class));
            let f1 = ratio(2 * tp, m.predicted_count(class) + m.truth_count(class));
            ClassMetrics { class, precision, recall, f1, support: m.truth_count(class) }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
        }
    };

    // single-label: pooled TP = correct, pooled FP = pooled FN = total - correct
    let correct = m.correct();
    let total = m.total();
    let accuracy = ratio(correct, total);
    let report = MetricsReport {
        accuracy,
        precision_macro: mean(|c| c.precision),
        recall_macro: mean(|c| c.recall),
        f1_macro: mean(|c| c.f1),
        precision_micro: ratio(correct, total),
        recall_micro: ratio(correct, total),
        f1_micro: ratio(2 * correct, 2 * total),
        per_class,
    };
    Ok((m, report))
}
