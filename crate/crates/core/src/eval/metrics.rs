use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub per_class: Vec<ClassScores>,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

fn check(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: predicted.len() });
    }
    if let Some(bad) = truth.iter().chain(predicted).find(|&&l| l >= n_classes) {
        return Err(Error::InvalidDataset(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision, recall and F per class plus their unweighted
/// means over all `n_classes` classes. Zero denominators score 0.
pub fn macro_metrics(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<MacroMetrics> {
    check(truth, predicted, n_classes)?;
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class: Vec<ClassScores> = (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            let f_score = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f_score,
                true_positives: tp[c],
                false_positives: fp[c],
                false_negatives: fn_[c],
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| {
        if n_classes == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / n_classes as f64
        }
    };
    Ok(MacroMetrics {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f_score: mean(|s| s.f_score),
        per_class,
    })
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    /// Rows scaled to 100 and rounded by largest remainder; empty rows stay 0.
    pub normalized: Vec<Vec<u32>>,
}

/// Integer percentages summing to exactly 100 (largest remainder, ties to
/// the lower index). An all-zero row stays zero.
pub fn normalize_row(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut out: Vec<u32> = counts.iter().map(|&c| (100 * c / total) as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| ((100 * counts[b]) % total).cmp(&((100 * counts[a]) % total)).then(a.cmp(&b)));
    for &j in order.iter().take((100 - assigned) as usize) {
        out[j] += 1;
    }
    out
}

pub fn confusion(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    check(truth, predicted, n_classes)?;
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[t][p] += 1;
    }
    let normalized = counts.iter().map(|r| normalize_row(r)).collect();
    Ok(ConfusionMatrix { counts, normalized })
}
