//! Class-balanced BCE, AdamW and the epoch loop with early stopping.

mod adamw;
mod loss;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adamw::{adamw_step, AdamState};
pub use loss::{balanced_bce, bce, ClassWeights};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_DROPOUT, STREAM_SHUFFLE};
use crate::model::{predict_proba, InputLayout, Mode, Model};
use crate::tensor::{Graph, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub eps_adam: f64,
    /// Use class-balanced weights; off means plain BCE.
    pub balanced: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0003,
            betas: (0.9, 0.999),
            weight_decay: 0.001,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            eps_adam: 1e-8,
            balanced: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config(format!("betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::Config("batch_size and max_epochs must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) || !(self.eps_adam > 0.0) {
            return Err(Error::Config("weight_decay must be >= 0 and eps_adam > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub class_weights: ClassWeights,
}

/// A loss counts as an improvement when it beats the incumbent by more
/// than this.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

/// Patience bookkeeping over a stream of validation losses.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        let improved = self.best_epoch == 0 || loss < self.best - IMPROVEMENT_TOL;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Validation loss in eval mode with the given class weights.
pub fn evaluate_loss(model: &Model, data: &Dataset, weights: ClassWeights) -> Result<f64> {
    let probs = predict_proba(model, data)?;
    balanced_bce(&probs, data.labels(), weights)
}

/// Mean training loss of one mini-batch and its parameter gradients.
pub fn batch_gradients(
    model: &Model,
    x: &[f64],
    labels: &[u8],
    weights: ClassWeights,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<crate::tensor::Tensor>)> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = model.params().register(&mut g);
    let probs = model.forward_graph(&mut g, &ids, x, labels.len(), Mode::Train, rng)?;
    let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
    let loss = g.weighted_bce(probs, &y, weights.w0, weights.w1)?;
    g.backward(loss)?;
    let value = g.value(loss).data()[0];
    let grads = ids
        .iter()
        .zip(model.params().iter())
        .map(|(&id, p)| g.grad(id).unwrap_or_else(|| crate::tensor::Tensor::zeros(p.value.shape())))
        .collect();
    Ok((value, grads))
}

/// Mini-batch AdamW training with early stopping on validation loss.
///
/// Class weights come from `train` only and are reused for the validation
/// loss. Returns the model restored to its best-validation epoch.
pub fn train(model: &Model, train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<(Model, TrainLog)> {
    config.validate()?;
    let layout = InputLayout::from_schema(train.schema());
    if layout != *model.layout() || InputLayout::from_schema(val.schema()) != layout {
        return Err(Error::Data("train/validation schema does not match the model".into()));
    }
    if val.n_rows() == 0 {
        return Err(Error::Data("validation split is empty".into()));
    }
    let weights = if config.balanced {
        ClassWeights::from_labels(train.labels())?
    } else {
        ClassWeights::UNIT
    };

    let mut model = model.clone();
    let mut state = AdamState::new(model.params());
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(config.seed, STREAM_DROPOUT);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = model.params().clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut step: u64 = 0;

    let d = train.n_features();
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut x = Vec::with_capacity(config.batch_size * d);
    let mut y = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            x.clear();
            y.clear();
            for &r in batch {
                x.extend_from_slice(train.row(r));
                y.push(train.labels()[r]);
            }
            let (loss, grads) = batch_gradients(&model, &x, &y, weights, &mut dropout_rng)
                .map_err(|e| e.in_context(format!("epoch {epoch} training step")))?;
            step += 1;
            adamw_step(model.params_mut(), &grads, &mut state, config, step);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.n_rows() as f64;
        let val_loss = evaluate_loss(&model, val, weights)?;
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        let obs = stopper.observe(epoch, val_loss);
        if obs.improved {
            best_params = model.params().clone();
        }
        if obs.stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    *model.params_mut() = best_params;
    let log = TrainLog {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        stop_reason,
        class_weights: weights,
    };
    Ok((model, log))
}
