use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::weighted_bce;

/// Per-class loss weights `w1 = n / (2 n_pos)`, `w0 = n / (2 n_neg)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { w0: 1.0, w1: 1.0 };

    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        let n = labels.len();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = n - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::Data(format!(
                "class weights undefined: training split has {pos} positives and {neg} negatives"
            )));
        }
        Ok(ClassWeights {
            w0: n as f64 / (2.0 * neg as f64),
            w1: n as f64 / (2.0 * pos as f64),
        })
    }
}

fn as_f64(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&y| y as f64).collect()
}

/// Mean of `-[w1 y ln p + w0 (1-y) ln(1-p)]` with p clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn balanced_bce(probs: &[f64], labels: &[u8], weights: ClassWeights) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::shape(
            "balanced_bce",
            format!("{} probabilities vs {} labels", probs.len(), labels.len()),
        ));
    }
    Ok(weighted_bce(probs, &as_f64(labels), weights.w0, weights.w1))
}

/// Unweighted binary cross-entropy.
pub fn bce(probs: &[f64], labels: &[u8]) -> Result<f64> {
    balanced_bce(probs, labels, ClassWeights::UNIT)
}
