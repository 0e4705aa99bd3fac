use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{apply_threshold, auprc, confusion_metrics, pr_curve, ConfusionMetrics, PrPoint};
use crate::data::{fit_standardizer, stratified_holdout, stratified_k_fold, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::model::{predict_proba, InputLayout, Model, ModelConfig, ModelKind};
use crate::train::{train, TrainConfig, TrainLog};

/// Share of each training portion held back for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.125;

/// What to build for every fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub config: ModelConfig,
}

impl ModelSpec {
    pub fn build(&self, layout: &InputLayout, seed: u64) -> Result<Model> {
        Model::new(self.kind, &self.config, layout, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k: usize,
    pub threshold: f64,
    /// Fold `f` uses `seed + f` for initialization, shuffling, dropout and
    /// the validation carve; the fold assignment itself uses `seed`.
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            k: 5,
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub threshold: f64,
    #[serde(flatten)]
    pub metrics: ConfusionMetrics,
    pub auprc: f64,
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (divisor k − 1).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: ModelKind,
    pub k: usize,
    pub threshold: f64,
    pub seed: u64,
    pub config_fingerprint: String,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub auprc: Summary,
    pub folds: Vec<FoldReport>,
}

impl CvReport {
    pub fn from_folds(model: ModelKind, settings: &CvSettings, fingerprint: String, folds: Vec<FoldReport>) -> Self {
        let over = |f: fn(&FoldReport) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
        CvReport {
            model,
            k: settings.k,
            threshold: settings.threshold,
            seed: settings.seed,
            config_fingerprint: fingerprint,
            accuracy: over(|f| f.metrics.accuracy),
            precision: over(|f| f.metrics.precision),
            recall: over(|f| f.metrics.recall),
            f1: over(|f| f.metrics.f1),
            auprc: over(|f| f.auprc),
            folds,
        }
    }
}

/// Everything a fold produced besides its report.
#[derive(Clone, Debug)]
pub struct FoldRun {
    pub model: Model,
    pub log: TrainLog,
    /// Schema carrying the training-portion standardization statistics.
    pub schema: FeatureSchema,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CvRun {
    pub report: CvReport,
    pub folds: Vec<FoldRun>,
}

/// SHA-256 over the model spec, training config, CV settings and the
/// data schema.
pub fn config_fingerprint(spec: &ModelSpec, train: &TrainConfig, settings: &CvSettings, schema: &FeatureSchema) -> Result<String> {
    let doc = serde_json::json!({
        "model": spec,
        "train": train,
        "cv": settings,
        "schema": schema.fingerprint(),
    });
    let digest = Sha256::digest(serde_json::to_vec(&doc)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Stratified k-fold evaluation of freshly built models on raw
/// (unstandardized) data. Folds run in parallel; results do not depend on
/// the number of threads.
pub fn run_cv(data: &Dataset, spec: &ModelSpec, train_config: &TrainConfig, settings: &CvSettings) -> Result<CvRun> {
    train_config.validate()?;
    spec.config.validate()?;
    if !(settings.threshold >= 0.0 && settings.threshold <= 1.0) {
        return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", settings.threshold)));
    }
    let folds = stratified_k_fold(data.labels(), settings.k, settings.seed)?;
    let fingerprint = config_fingerprint(spec, train_config, settings, data.schema())?;

    let runs: Vec<(FoldReport, FoldRun)> = (0..settings.k)
        .into_par_iter()
        .map(|f| {
            let fold_seed = settings.seed.wrapping_add(f as u64);
            let test_rows = folds.test_rows(f);
            let (train_rows, validation_rows) =
                stratified_holdout(&folds.train_rows(f), data.labels(), VALIDATION_FRACTION, fold_seed)?;
            let standardizer = fit_standardizer(data, &train_rows)?;
            let train_set = standardizer.apply(&data.subset(&train_rows))?;
            let val_set = standardizer.apply(&data.subset(&validation_rows))?;
            let test_set = standardizer.apply(&data.subset(&test_rows))?;

            let layout = InputLayout::from_schema(train_set.schema());
            let init = spec.build(&layout, fold_seed)?;
            let config = TrainConfig {
                seed: fold_seed,
                ..train_config.clone()
            };
            let (model, log) = train(&init, &train_set, &val_set, &config)
                .map_err(|e| e.in_context(format!("fold {f}")))?;

            let probabilities = predict_proba(&model, &test_set)?;
            let metrics = confusion_metrics(&apply_threshold(&probabilities, settings.threshold), test_set.labels())?;
            let curve = pr_curve(&probabilities, test_set.labels())?;
            let report = FoldReport {
                fold: f,
                n_train: train_rows.len(),
                n_validation: validation_rows.len(),
                n_test: test_rows.len(),
                threshold: settings.threshold,
                metrics,
                auprc: auprc(&curve),
                pr_curve: curve,
            };
            let run = FoldRun {
                model,
                log,
                schema: train_set.schema().clone(),
                train_rows,
                validation_rows,
                test_rows,
                probabilities,
            };
            Ok((report, run))
        })
        .collect::<Result<_>>()?;

    let (reports, runs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(CvRun {
        report: CvReport::from_folds(spec.kind, settings, fingerprint, reports),
        folds: runs,
    })
}
