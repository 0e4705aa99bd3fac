use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Whether AdamW weight decay applies.
    pub decay: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
}

/// Parameters in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, decay: bool) {
        self.params.push(Param {
            name: name.into(),
            value,
            decay,
        });
    }

    /// Matrix drawn from U(-bound, bound).
    pub fn push_uniform<R: Rng + ?Sized>(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64, rng: &mut R) {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.push(name, Tensor::matrix(rows, cols, data).expect("shape"), true);
    }

    pub fn push_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: f64) {
        self.push(name, Tensor::full(&[rows, cols], value), false);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn meta(&self) -> Vec<ParamMeta> {
        self.params
            .iter()
            .map(|p| ParamMeta {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                decay: p.decay,
            })
            .collect()
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Registers every parameter as a trainable leaf, in order.
    pub fn register(&self, g: &mut Graph) -> Vec<NodeId> {
        self.params.iter().map(|p| g.param(p.value.clone())).collect()
    }

    /// Flat concatenation of all values in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.numel() {
            return Err(Error::Data(format!(
                "parameter buffer has {} values, model needs {}",
                flat.len(),
                self.numel()
            )));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Walks graph leaves in parameter declaration order.
pub(crate) struct ParamCursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    pub(crate) fn new(ids: &'a [NodeId]) -> Self {
        ParamCursor { ids, pos: 0 }
    }

    pub(crate) fn next(&mut self) -> Result<NodeId> {
        let id = self
            .ids
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::shape("forward", "ran out of parameters"))?;
        self.pos += 1;
        Ok(id)
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.ids.len() {
            return Err(Error::shape(
                "forward",
                format!("used {} of {} parameters", self.pos, self.ids.len()),
            ));
        }
        Ok(())
    }
}
