use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fmath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| b > 0.0 && b < 1.0;
        if !(self.alpha > 0.0 && self.alpha.is_finite())
            || !beta_ok(self.beta1)
            || !beta_ok(self.beta2)
            || !(self.epsilon > 0.0 && self.epsilon.is_finite())
        {
            return Err(invalid!("Adam needs alpha > 0, betas in (0, 1) and epsilon > 0"));
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// One bias-corrected Adam update at step `t` (1-based):
/// `theta -= alpha * m_hat / (sqrt(v_hat) + epsilon)`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, t: u64, cfg: &AdamConfig) -> Result<()> {
    if t == 0 {
        return Err(invalid!("Adam step index starts at 1"));
    }
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(invalid!(
            "Adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(invalid!("non-finite gradient"));
    }
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - fmath::powi(cfg.beta1, t);
    let c2 = 1.0 - fmath::powi(cfg.beta2, t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.alpha * m_hat / (fmath::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}
