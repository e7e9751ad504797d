use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient is
/// non-finite or mis-shaped.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::Config("parameter, gradient and state counts differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(TrainError::Config(format!("shape mismatch for parameter tensor {i}")));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(i));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
