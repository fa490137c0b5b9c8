use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.m.len() || opt.m.len() != opt.v.len() {
        return Err(Error::InvalidInput(format!(
            "adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(opt.m.iter_mut().zip(opt.v.iter_mut())) {
        *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    Ok(())
}

/// Step schedule: `lr0 / factor` once `epoch >= drop_epoch`.
pub fn learning_rate_at(lr0: f64, factor: f64, drop_epoch: usize, epoch: usize) -> f64 {
    if epoch >= drop_epoch {
        lr0 / factor
    } else {
        lr0
    }
}
