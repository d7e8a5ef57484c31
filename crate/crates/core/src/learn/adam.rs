use crate::nn::Tensor;

use super::{LearnError, LearnResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-5)
    }
}

/// Moment buffers, allocated on the first step in parameter order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

/// One bias-corrected Adam update of a single buffer at step `t` (1-based).
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Updates every parameter from its gradient buffer (missing buffers count
/// as zero). Nothing is modified if any gradient is non-finite.
pub fn adam_step(params: &mut [(String, &mut Tensor)], state: &mut AdamState, cfg: &AdamConfig) -> LearnResult<()> {
    for (name, t) in params.iter() {
        if let Some(g) = &t.grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFiniteGradient { name: name.clone() });
            }
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, (_, t))| m.len() != t.len()) {
        return Err(LearnError::Config("optimizer state does not match the parameters".into()));
    }
    state.step += 1;
    for (i, (_, t)) in params.iter_mut().enumerate() {
        let grad = t.grad.take().unwrap_or_else(|| vec![0.0; t.len()]);
        adam_update(&mut t.data, &grad, &mut state.m[i], &mut state.v[i], state.step, cfg);
        t.grad = Some(grad);
    }
    Ok(())
}
