use rand::{Rng, RngCore};

use super::params::{ParamCursor, ParamSet};
use super::{InputColumn, InputLayout, Mode, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

/// Dense design matrix for the baselines: numeric columns as-is,
/// categorical columns one-hot over their cardinality (unknown slot
/// included).
pub fn encode_dense(layout: &InputLayout, x: &[f64], n_rows: usize) -> Result<Tensor> {
    let n_cols = layout.len();
    if x.len() != n_rows * n_cols {
        return Err(Error::shape(
            "encode_dense",
            format!("{} values for {n_rows} rows of {n_cols} features", x.len()),
        ));
    }
    let width = layout.dense_width();
    let mut out = vec![0.0; n_rows * width];
    for r in 0..n_rows {
        let mut offset = 0;
        for (j, col) in layout.columns().iter().enumerate() {
            let v = x[r * n_cols + j];
            match col {
                InputColumn::Numeric { .. } => {
                    out[r * width + offset] = v;
                    offset += 1;
                }
                InputColumn::Categorical { name, cardinality } => {
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= *cardinality {
                        return Err(Error::Data(format!("category index {v} out of range for column {name:?}")));
                    }
                    out[r * width + offset + v as usize] = 1.0;
                    offset += cardinality;
                }
            }
        }
    }
    Tensor::matrix(n_rows, width, out)
}

/// `sigmoid(w·x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Logistic {
    pub(crate) layout: InputLayout,
    pub(crate) params: ParamSet,
}

impl Logistic {
    pub fn new<R: Rng + ?Sized>(layout: &InputLayout, rng: &mut R) -> Result<Self> {
        let width = layout.dense_width();
        if width == 0 {
            return Err(Error::Config("logistic model needs at least one feature".into()));
        }
        let mut params = ParamSet::new();
        params.push_uniform("logistic.weight", width, 1, 1.0 / (width as f64).sqrt(), rng);
        params.push_const("logistic.bias", 1, 1, 0.0);
        Ok(Logistic {
            layout: layout.clone(),
            params,
        })
    }

    pub(crate) fn forward_graph(&self, g: &mut Graph, ids: &[NodeId], x: &[f64], n_rows: usize) -> Result<NodeId> {
        let mut cur = ParamCursor::new(ids);
        let input = g.constant(encode_dense(&self.layout, x, n_rows)?);
        let (w, b) = (cur.next()?, cur.next()?);
        let logit = g.matmul(input, w)?;
        let logit = g.add_row(logit, b)?;
        cur.finish()?;
        g.sigmoid(logit)
    }
}

/// Stack of `Linear -> GELU -> dropout` layers and a sigmoid output unit.
/// With no hidden layers this is exactly [`Logistic`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub(crate) hidden: Vec<usize>,
    pub(crate) dropout: f64,
    pub(crate) layout: InputLayout,
    pub(crate) params: ParamSet,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, layout: &InputLayout, rng: &mut R) -> Result<Self> {
        if config.mlp_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", config.dropout)));
        }
        let mut width = layout.dense_width();
        if width == 0 {
            return Err(Error::Config("mlp needs at least one feature".into()));
        }
        let mut params = ParamSet::new();
        for (i, &h) in config.mlp_hidden.iter().enumerate() {
            params.push_uniform(format!("mlp.{i}.weight"), width, h, 1.0 / (width as f64).sqrt(), rng);
            params.push_const(format!("mlp.{i}.bias"), 1, h, 0.0);
            width = h;
        }
        params.push_uniform("mlp.out.weight", width, 1, 1.0 / (width as f64).sqrt(), rng);
        params.push_const("mlp.out.bias", 1, 1, 0.0);
        Ok(Mlp {
            hidden: config.mlp_hidden.clone(),
            dropout: config.dropout,
            layout: layout.clone(),
            params,
        })
    }

    pub(crate) fn forward_graph(
        &self,
        g: &mut Graph,
        ids: &[NodeId],
        x: &[f64],
        n_rows: usize,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<NodeId> {
        let mut cur = ParamCursor::new(ids);
        let mut h = g.constant(encode_dense(&self.layout, x, n_rows)?);
        for i in 0..self.hidden.len() {
            let (w, b) = (cur.next()?, cur.next()?);
            let layer = |g: &mut Graph, rng: &mut dyn RngCore| -> Result<NodeId> {
                let z = g.matmul(h, w)?;
                let z = g.add_row(z, b)?;
                let z = g.gelu(z)?;
                g.dropout(z, self.dropout, mode == Mode::Train, rng)
            };
            h = layer(g, rng).map_err(|e| e.in_context(format!("mlp layer {}", i + 1)))?;
        }
        let (w, b) = (cur.next()?, cur.next()?);
        let logit = g.matmul(h, w)?;
        let logit = g.add_row(logit, b)?;
        cur.finish()?;
        g.sigmoid(logit)
    }
}
