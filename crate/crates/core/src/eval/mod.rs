//! Hard-label metrics, precision-recall curves, average precision and
//! stratified cross-validation.

mod cv;
mod metrics;

use std::path::Path;

pub use cv::{config_fingerprint, run_cv, CvReport, CvRun, CvSettings, FoldReport, FoldRun, ModelSpec, Summary, VALIDATION_FRACTION};
pub use metrics::{apply_threshold, auprc, average_precision, confusion_metrics, pr_curve, ConfusionMetrics, PrPoint};

use crate::error::{Error, Result};

/// Writes `recall,precision` rows, anchor first.
pub fn write_pr_csv(points: &[PrPoint], path: &Path) -> Result<()> {
    let mut out = String::from("recall,precision\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.recall, p.precision));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
