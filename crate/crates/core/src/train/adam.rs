use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::model::ModelWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> Self {
        let zeros: Vec<Vec<f32>> = weights.param_slices().iter().map(|s| vec![0.0; s.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn check(&self, weights: &ModelWeights) -> Result<()> {
        let lens: Vec<usize> = weights.param_slices().iter().map(|s| s.len()).collect();
        let mine: Vec<usize> = self.m.iter().map(Vec::len).collect();
        if lens != mine || self.v.iter().map(Vec::len).ne(lens.iter().copied()) {
            return Err(TrainError::Optimizer(
                "moment buffers do not match the weight layout".into(),
            ));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of `weights` in place.
pub fn adam_step(
    weights: &mut ModelWeights,
    grads: &ModelWeights,
    state: &mut AdamState,
    lr: f64,
    p: &AdamParams,
) -> Result<()> {
    if weights.config != grads.config {
        return Err(TrainError::Optimizer(format!(
            "gradient layout {} does not match weights {}",
            grads.config, weights.config
        )));
    }
    state.check(weights)?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - p.beta1.powi(t);
    let bc2 = 1.0 - p.beta2.powi(t);
    let grad_slices = grads.param_slices();
    for (((w, g), m), v) in weights
        .param_slices_mut()
        .into_iter()
        .zip(grad_slices)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..w.len() {
            let theta = w[i] as f64;
            let gi = g[i] as f64 + p.weight_decay * theta;
            let mi = p.beta1 * m[i] as f64 + (1.0 - p.beta1) * gi;
            let vi = p.beta2 * v[i] as f64 + (1.0 - p.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            w[i] = (theta - lr * m_hat / (v_hat.sqrt() + p.eps)) as f32;
        }
    }
    Ok(())
}
