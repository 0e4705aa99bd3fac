use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive-class confusion counts and the metrics derived from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let n = tp + fp + tn + fn_;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ConfusionMetrics {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, n),
            precision,
            recall,
            f1,
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Accuracy, precision, recall and F1 of hard predictions, positive class
/// only. Undefined ratios are reported as 0.
pub fn confusion_metrics(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("confusion metrics need at least one row".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ConfusionMetrics::from_counts(tp, fp, tn, fn_))
}

/// `1` where `p >= threshold`.
pub fn apply_threshold(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| (p >= threshold) as u8).collect()
}

/// One operating point of a precision-recall sweep. `threshold` is the
/// lowest score admitted; the leading anchor has none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall points from a descending sweep over distinct scores.
///
/// Tied scores enter together. The curve starts at the anchor
/// `(recall 0, precision 1)`.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score {s} in precision-recall sweep")));
    }
    let positives = labels.iter().filter(|&&y| y != 0).count();
    if positives == 0 {
        return Err(Error::Data("precision-recall curve needs at least one positive label".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![PrPoint {
        threshold: None,
        tp: 0,
        fp: 0,
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: Some(s),
            tp,
            fp,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// Average precision `Σ (R_i − R_{i−1}) · P_i` over a curve from
/// [`pr_curve`].
///
/// Consecutive steps with equal precision are merged before the recall
/// increment is formed, so a perfect ranking sums to exactly 1 and a
/// single tie group to exactly its precision.
pub fn auprc(points: &[PrPoint]) -> f64 {
    let Some(last) = points.last() else {
        return 0.0;
    };
    let positives = last.tp as f64;
    if last.tp == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut run_tp = 0usize;
    let mut run_precision = f64::NAN;
    for w in points.windows(2) {
        let gained = w[1].tp - w[0].tp;
        if gained == 0 {
            continue;
        }
        if w[1].precision != run_precision {
            if run_tp > 0 {
                total += run_tp as f64 / positives * run_precision;
            }
            run_tp = 0;
            run_precision = w[1].precision;
        }
        run_tp += gained;
    }
    if run_tp > 0 {
        total += run_tp as f64 / positives * run_precision;
    }
    total
}

/// [`pr_curve`] followed by [`auprc`].
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auprc(&pr_curve(scores, labels)?))
}
