use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{GeniError, Result};

/// Adam hyperparameters. Weight decay is coupled: `weight_decay · θ` is added
/// to the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(GeniError::Shape(
            "optimizer state does not match the parameter store".into(),
        ));
    }
    for (id, g) in grads.iter() {
        if g.shape() != params.get(id).shape() || state.m[id.0].shape() != g.shape() {
            return Err(GeniError::Shape(format!(
                "gradient for `{}` has the wrong shape",
                params.name(id)
            )));
        }
        if !g.is_finite() {
            return Err(GeniError::NonFinite(format!(
                "gradient for `{}`",
                params.name(id)
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (id, g) in grads.iter() {
        let theta = params.get_mut(id).data_mut();
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        for k in 0..theta.len() {
            let grad = g.data()[k] + cfg.weight_decay * theta[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad * grad;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            theta[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
