//! Feature-tokenizer transformer plus logistic-regression and MLP
//! baselines behind one parameter/prediction interface.

mod baseline;
mod checkpoint;
mod config;
mod params;
mod transformer;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{encode_dense, Logistic, Mlp};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, ModelKind};
pub use params::{Param, ParamMeta, ParamSet};
pub use transformer::{attention, multi_head, AttentionWeights, Transformer};

use crate::data::{ColumnKind, Dataset, FeatureSchema};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputColumn {
    Numeric { name: String },
    /// `cardinality` counts the unknown slot.
    Categorical { name: String, cardinality: usize },
}

/// Column kinds a model was built for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    columns: Vec<InputColumn>,
}

impl InputLayout {
    pub fn new(columns: Vec<InputColumn>) -> Self {
        InputLayout { columns }
    }

    pub fn from_schema(schema: &FeatureSchema) -> Self {
        let columns = schema
            .columns()
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Numeric => InputColumn::Numeric { name: c.name.clone() },
                ColumnKind::Categorical { vocabulary } => InputColumn::Categorical {
                    name: c.name.clone(),
                    cardinality: vocabulary.len() + 1,
                },
            })
            .collect();
        InputLayout { columns }
    }

    pub fn numeric(n: usize) -> Self {
        InputLayout {
            columns: (0..n).map(|j| InputColumn::Numeric { name: format!("x{j}") }).collect(),
        }
    }

    pub fn columns(&self) -> &[InputColumn] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn n_numeric(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, InputColumn::Numeric { .. }))
            .count()
    }

    /// Width of the one-hot design matrix used by the baselines.
    pub fn dense_width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                InputColumn::Numeric { .. } => 1,
                InputColumn::Categorical { cardinality, .. } => *cardinality,
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Transformer(Transformer),
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Model {
    /// Builds a freshly initialized model; all randomness comes from `seed`.
    pub fn new(kind: ModelKind, config: &ModelConfig, layout: &InputLayout, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match kind {
            ModelKind::Transformer => Model::Transformer(Transformer::new(config, layout, &mut rng)?),
            ModelKind::Logistic => Model::Logistic(Logistic::new(layout, &mut rng)?),
            ModelKind::Mlp => Model::Mlp(Mlp::new(config, layout, &mut rng)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Transformer(_) => ModelKind::Transformer,
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn layout(&self) -> &InputLayout {
        match self {
            Model::Transformer(m) => &m.layout,
            Model::Logistic(m) => &m.layout,
            Model::Mlp(m) => &m.layout,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Transformer(m) => &m.params,
            Model::Logistic(m) => &m.params,
            Model::Mlp(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Transformer(m) => &mut m.params,
            Model::Logistic(m) => &mut m.params,
            Model::Mlp(m) => &mut m.params,
        }
    }

    /// Records the forward pass for `n_rows` rows of `x` (row-major,
    /// standardized) on `g`, using `ids` as the parameter leaves in
    /// declaration order. Returns the `[n_rows, 1]` probability node.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        ids: &[NodeId],
        x: &[f64],
        n_rows: usize,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<NodeId> {
        if ids.len() != self.params().len() {
            return Err(Error::shape(
                "forward",
                format!("{} parameter leaves for {} parameters", ids.len(), self.params().len()),
            ));
        }
        match self {
            Model::Transformer(m) => m.forward_graph(g, ids, x, n_rows, mode, rng),
            Model::Logistic(m) => m.forward_graph(g, ids, x, n_rows),
            Model::Mlp(m) => m.forward_graph(g, ids, x, n_rows, mode, rng),
        }
    }

    /// Probabilities for a block of rows.
    pub fn forward_batch(&self, x: &[f64], n_rows: usize, mode: Mode, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = self.params().iter().map(|p| g.constant(p.value.clone())).collect();
        let out = self.forward_graph(&mut g, &ids, x, n_rows, mode, rng)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Probability for one standardized row.
    pub fn forward(&self, row: &[f64], mode: Mode, rng: &mut dyn RngCore) -> Result<f64> {
        if row.len() != self.layout().len() {
            return Err(Error::shape(
                "forward",
                format!("row has {} values, model expects {}", row.len(), self.layout().len()),
            ));
        }
        Ok(self.forward_batch(row, 1, mode, rng)?[0])
    }
}

/// Rows scored per graph in [`predict_proba`].
pub const PREDICT_CHUNK: usize = 512;

/// Eval-mode probabilities for every row of a standardized dataset.
pub fn predict_proba(model: &Model, data: &Dataset) -> Result<Vec<f64>> {
    if InputLayout::from_schema(data.schema()) != *model.layout() {
        return Err(Error::Data("dataset schema does not match the model's input layout".into()));
    }
    let d = data.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(data.n_rows());
    for chunk in data.features().chunks(PREDICT_CHUNK * d.max(1)) {
        let n = chunk.len().checked_div(d).unwrap_or(0);
        out.extend(model.forward_batch(chunk, n, Mode::Eval, &mut rng)?);
    }
    Ok(out)
}
