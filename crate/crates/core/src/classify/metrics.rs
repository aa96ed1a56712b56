use serde::Serialize;

use crate::error::{Error, Result};

/// Area under the ROC curve as the probability that a random positive
/// outscores a random negative, ties counting one half.
///
/// Computed from average ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MissingClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group i..=j.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Suite {
    /// Precision, recall and F1 of the positive class.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Precision/recall/F1 for `positive`, plus macro- and micro-averaged F1
/// over `n_classes`. Classes with no true and no predicted instance get F1 0.
pub fn f1_suite(predictions: &[usize], labels: &[usize], n_classes: usize, positive: usize) -> Result<F1Suite> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to score"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if let Some(&bad) = predictions.iter().chain(labels).find(|&&c| c >= n_classes) {
        return Err(Error::Malformed(format!("class index {bad} out of range for {n_classes} classes")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..n_classes).map(|c| f1(tp[c], fp[c], fn_[c]).2).collect();
    let (precision, recall, f1_pos) = f1(tp[positive], fp[positive], fn_[positive]);
    let (_, _, micro_f1) = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let correct: usize = tp.iter().sum();
    Ok(F1Suite {
        precision,
        recall,
        f1: f1_pos,
        macro_f1: per_class_f1.iter().sum::<f64>() / n_classes as f64,
        micro_f1,
        accuracy: correct as f64 / labels.len() as f64,
        per_class_f1,
    })
}
