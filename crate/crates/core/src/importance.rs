//! Permutation feature importance: the F1 lost when one column of a
//! held-out set is shuffled within itself.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{apply_threshold, confusion_metrics, Summary};
use crate::model::{predict_proba, Model};
use crate::rng::{stream_rng, STREAM_PERMUTE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    #[default]
    Shuffle,
    /// Leaves every column in place. Drops are exactly zero; useful as a
    /// control.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceOptions {
    pub repeats: usize,
    /// Feature `j` draws its permutations from `seed + j`.
    pub seed: u64,
    pub threshold: f64,
    pub mode: PermutationMode,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            repeats: 5,
            seed: 0,
            threshold: 0.5,
            mode: PermutationMode::Shuffle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Position in the schema.
    pub index: usize,
    /// 1 is most important.
    pub rank: usize,
    pub mean_drop: f64,
    /// Sample std over repeats; 0 for a single repeat.
    pub std_drop: f64,
    pub drops: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_f1: f64,
    pub repeats: usize,
    pub seed: u64,
    pub threshold: f64,
    pub mode: PermutationMode,
    /// Sorted by rank.
    pub features: Vec<FeatureImportance>,
}

/// The `opts.repeats` permuted copies of column `feature` scored by
/// [`permutation_importance`].
pub fn column_permutations(column: &[f64], feature: usize, opts: &ImportanceOptions) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(opts.seed.wrapping_add(feature as u64), STREAM_PERMUTE);
    (0..opts.repeats)
        .map(|_| {
            let mut permuted = column.to_vec();
            if opts.mode == PermutationMode::Shuffle {
                permuted.shuffle(&mut rng);
            }
            permuted
        })
        .collect()
}

fn f1_of(model: &Model, data: &Dataset, threshold: f64) -> Result<f64> {
    let probs = predict_proba(model, data)?;
    Ok(confusion_metrics(&apply_threshold(&probs, threshold), data.labels())?.f1)
}

/// Scores every feature of a standardized held-out set against a trained
/// model in eval mode. Drops may be negative and are reported as is.
pub fn permutation_importance(model: &Model, data: &Dataset, opts: &ImportanceOptions) -> Result<ImportanceReport> {
    if opts.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let positives = data.positives();
    if positives == 0 || positives == data.n_rows() {
        return Err(Error::Data("importance needs a held-out set with both classes".into()));
    }
    let baseline = f1_of(model, data, opts.threshold)?;

    let scored: Vec<(usize, Vec<f64>)> = (0..data.n_features())
        .into_par_iter()
        .map(|j| {
            let drops = column_permutations(&data.column(j), j, opts)
                .iter()
                .map(|permuted| Ok(baseline - f1_of(model, &data.with_column(j, permuted), opts.threshold)?))
                .collect::<Result<Vec<f64>>>()?;
            Ok((j, drops))
        })
        .collect::<Result<_>>()?;

    let mut features: Vec<FeatureImportance> = scored
        .into_iter()
        .map(|(j, drops)| {
            let s = Summary::of(&drops);
            FeatureImportance {
                feature: data.schema().columns()[j].name.clone(),
                index: j,
                rank: 0,
                mean_drop: s.mean,
                std_drop: s.std,
                drops,
            }
        })
        .collect();
    features.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    for (i, f) in features.iter_mut().enumerate() {
        f.rank = i + 1;
    }
    Ok(ImportanceReport {
        baseline_f1: baseline,
        repeats: opts.repeats,
        seed: opts.seed,
        threshold: opts.threshold,
        mode: opts.mode,
        features,
    })
}

impl ImportanceReport {
    /// `feature,mean_drop` rows in rank order, at most `top_n` of them.
    pub fn to_csv(&self, top_n: Option<usize>) -> String {
        let mut out = String::from("feature,mean_drop\n");
        for f in self.features.iter().take(top_n.unwrap_or(usize::MAX)) {
            out.push_str(&format!("{},{}\n", csv_field(&f.feature), f.mean_drop));
        }
        out
    }

    pub fn write_csv(&self, path: &Path, top_n: Option<usize>) -> Result<()> {
        std::fs::write(path, self.to_csv(top_n)).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
