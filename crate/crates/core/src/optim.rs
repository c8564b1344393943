//! AdamW with decoupled weight decay and the warmup + cosine learning-rate
//! schedule.

use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::grad::GradientSet;
use crate::model::ModelParams;

pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: ADAM_EPSILON,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per parameter tensor, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.as_slice().len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One update: `p ← p − lr·wd·p`, then the bias-corrected Adam step.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut OptimState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut param_tensors = params.tensors_mut();
    if grad_tensors.len() != param_tensors.len() || state.m.len() != param_tensors.len() {
        return Err(CoreError::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for (idx, (p, g)) in param_tensors.iter_mut().zip(grad_tensors).enumerate() {
        let (p, g) = (p.as_mut_slice(), g.as_slice());
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        if p.len() != g.len() || m.len() != p.len() {
            return Err(CoreError::Shape(format!("tensor {idx}: gradient shape differs")));
        }
        for i in 0..p.len() {
            p[i] -= lr * cfg.weight_decay * p[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Linear warmup from 0 to `max_lr`, then cosine decay to 0 at `total_steps`.
/// Steps past the end are clamped.
pub fn lr_at(step: u64, max_lr: f64, warmup_steps: u64, total_steps: u64) -> f64 {
    let step = step.min(total_steps);
    if step < warmup_steps {
        return max_lr * step as f64 / warmup_steps as f64;
    }
    let span = total_steps.saturating_sub(warmup_steps);
    if span == 0 {
        return max_lr;
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    // Clamp cos(π) rounding noise.
    (max_lr * 0.5 * (1.0 + (PI * progress).cos())).max(0.0)
}
