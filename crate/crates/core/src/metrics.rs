//! Evaluation metrics: error rate, ROC-AUC (rank-based and trapezoidal),
//! and confusion counts with one-vs-rest extensions for multiclass.

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Percentage of misclassified instances. For binary tasks this is
/// (FP + FN) / (TP + TN + FP + FN) * 100; for multiclass it is the same
/// misclassification rate computed directly.
pub fn error_rate(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != truth.len() {
        return Err(Error::Metric(format!(
            "error_rate needs equal nonempty label lists, got {} vs {}",
            predictions.len(),
            truth.len()
        )));
    }
    let wrong = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / predictions.len() as f64 * 100.0)
}

/// Binary ROC-AUC via the Mann-Whitney statistic with average-rank tie
/// handling: the fraction of (positive, negative) pairs where the
/// positive outscores the negative, ties counting one half.
pub fn roc_auc_binary(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(Error::Metric(format!(
            "roc_auc needs equal nonempty score/label lists, got {} vs {}",
            scores.len(),
            truth.len()
        )));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "ROC-AUC undefined: need at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Average ranks over tie groups, then the rank-sum formula.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0; // 1-based
        for &idx in &order[i..=j] {
            if truth[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

/// Trapezoidal area under the TPR-vs-FPR curve. Agrees with
/// [`roc_auc_binary`] to within 1e-12; kept as the independent route.
pub fn roc_auc_trapezoid(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(Error::Metric("roc_auc needs equal nonempty lists".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count() as f64;
    let neg = truth.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Metric(
            "ROC-AUC undefined: need at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut auc = 0.0;
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let tpr = tp / pos;
        let fpr = fp / neg;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Ok(auc)
}

/// Unweighted mean of one-vs-rest binary AUCs, scoring class c by its
/// probability column. Classes absent from the truth are skipped with a
/// warning; the mean runs over the rest.
pub fn roc_auc_macro(prob_matrix: &Matrix, truth: &[usize]) -> Result<f64> {
    let n = prob_matrix.cols();
    if n < 2 {
        return Err(Error::Metric(format!("macro AUC needs >= 2 classes, got {n}")));
    }
    if prob_matrix.rows() != truth.len() {
        return Err(Error::Metric(format!(
            "macro AUC: {} rows vs {} labels",
            prob_matrix.rows(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0;
    for c in 0..n {
        let present = truth.iter().any(|&t| t == c);
        let absent_rest = truth.iter().all(|&t| t == c);
        if !present || absent_rest {
            eprintln!("warning: class {c} one-vs-rest AUC undefined; skipped in macro average");
            continue;
        }
        let scores: Vec<f64> = (0..truth.len()).map(|i| prob_matrix.get(i, c)).collect();
        let labels: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        sum += roc_auc_binary(&scores, &labels)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Metric("macro AUC: no class had both kinds of labels".into()));
    }
    Ok(sum / counted as f64)
}

/// The single AUC number reported for a model: binary AUC on class-1
/// probabilities for two-class tasks, macro one-vs-rest otherwise.
pub fn roc_auc_report(prob_matrix: &Matrix, truth: &[usize]) -> Result<f64> {
    if prob_matrix.cols() == 2 {
        let scores: Vec<f64> = (0..truth.len()).map(|i| prob_matrix.get(i, 1)).collect();
        let labels: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
        roc_auc_binary(&scores, &labels)
    } else {
        roc_auc_macro(prob_matrix, truth)
    }
}

/// Binary confusion counts; class 1 is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(predictions: &[usize], truth: &[usize], positive_class: usize) -> Self {
        let mut c = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p == positive_class, t == positive_class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn error_rate_percent(&self) -> f64 {
        (self.fp + self.fn_) as f64 / self.total() as f64 * 100.0
    }
}

/// One model/split evaluation, ready for the results table.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub error_rate_percent: f64,
    pub roc_auc: f64,
    pub per_class: Vec<ConfusionCounts>,
}

impl EvalReport {
    pub fn from_probs(prob_matrix: &Matrix, truth: &[usize]) -> Result<Self> {
        let predictions: Vec<usize> = (0..prob_matrix.rows())
            .map(|i| argmax(prob_matrix.row(i)))
            .collect();
        let per_class = (0..prob_matrix.cols())
            .map(|c| ConfusionCounts::from_labels(&predictions, truth, c))
            .collect();
        Ok(EvalReport {
            error_rate_percent: error_rate(&predictions, truth)?,
            roc_auc: roc_auc_report(prob_matrix, truth)?,
            per_class,
        })
    }
}

/// Index of the row maximum; ties break toward the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
