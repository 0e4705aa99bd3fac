use crate::model::ParamSet;
use crate::tensor::Tensor;

use super::TrainConfig;

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update at step `t` (1-based):
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
/// ```
///
/// Decay is skipped for parameters whose `decay` flag is off (biases,
/// norm gains, the classification token).
pub fn adamw_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, config: &TrainConfig, t: u64) {
    assert!(t >= 1, "adam step index starts at 1");
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    let (b1, b2) = config.betas;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let decay = if p.decay { 1.0 - config.lr * config.weight_decay } else { 1.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta = *theta * decay - config.lr * m_hat / (v_hat.sqrt() + config.eps_adam);
        }
    }
}
