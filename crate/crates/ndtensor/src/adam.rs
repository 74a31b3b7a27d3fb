use crate::error::{NdError, Result};

/// Adam hyperparameters. Defaults are the training setup this crate is
/// built for: lr 1e-4, β1 0.99, β2 0.0, ε 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-4,
            beta1: 0.99,
            beta2: 0.0,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction, applied in place.
///
/// Rejects non-finite gradients before touching the state, so an aborted
/// step leaves both the parameter and the moments untouched.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if grad.len() != param.len() {
        return Err(NdError::DimensionMismatch {
            op: "adam_step",
            left: vec![param.len()],
            right: vec![grad.len()],
        });
    }
    if state.m.len() != param.len() {
        return Err(NdError::StateLengthMismatch {
            state: state.m.len(),
            param: param.len(),
        });
    }
    for (i, &g) in grad.iter().enumerate() {
        if !g.is_finite() {
            return Err(NdError::NonFiniteGrad { index: i, value: g });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        param[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}
