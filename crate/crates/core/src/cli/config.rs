use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::LoadOptions;
use crate::error::{Error, Result};
use crate::eval::{CvSettings, ModelSpec};
use crate::importance::{ImportanceOptions, PermutationMode};
use crate::model::{ModelConfig, ModelKind};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSection {
    pub repeats: usize,
    /// Held-out fold scored against.
    pub fold: usize,
    pub top_n: Option<usize>,
    pub mode: PermutationMode,
}

impl Default for ImportanceSection {
    fn default() -> Self {
        ImportanceSection {
            repeats: 5,
            fold: 0,
            top_n: None,
            mode: PermutationMode::Shuffle,
        }
    }
}

/// Everything a run needs. Only `data` and `target` lack defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub load: LoadOptions,
    pub model: ModelKind,
    pub model_config: ModelConfig,
    /// `train.seed` is replaced by the top-level seed (plus the fold index
    /// during cross-validation).
    pub train: TrainConfig,
    pub k_folds: usize,
    pub threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub importance: ImportanceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            target: None,
            load: LoadOptions::default(),
            model: ModelKind::Transformer,
            model_config: ModelConfig::default(),
            train: TrainConfig::default(),
            k_folds: 5,
            threshold: 0.5,
            seed: 0,
            out: PathBuf::from("out"),
            importance: ImportanceSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks required fields and ranges and syncs `train.seed`.
    pub fn resolve(mut self) -> Result<Self> {
        if self.data.is_none() {
            return Err(Error::Config("no data path given (config \"data\" or --data)".into()));
        }
        if self.target.is_none() {
            return Err(Error::Config("no target column given (config \"target\" or --target)".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.k_folds < 2 {
            return Err(Error::Config(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        self.train.seed = self.seed;
        self.train.validate()?;
        self.model_config.validate()?;
        Ok(self)
    }

    pub fn data_path(&self) -> &Path {
        self.data.as_deref().expect("resolved config has a data path")
    }

    pub fn target_column(&self) -> &str {
        self.target.as_deref().expect("resolved config has a target")
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            config: self.model_config.clone(),
        }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            k: self.k_folds,
            threshold: self.threshold,
            seed: self.seed,
        }
    }

    pub fn importance_options(&self) -> ImportanceOptions {
        ImportanceOptions {
            repeats: self.importance.repeats,
            seed: self.seed,
            threshold: self.threshold,
            mode: self.importance.mode,
        }
    }
}
