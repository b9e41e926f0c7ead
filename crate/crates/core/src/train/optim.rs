use crate::embed::ToyParams;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: ToyParams,
    pub v: ToyParams,
    pub t: u64,
}

impl AdamWState {
    pub fn new(params: &ToyParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// Linear warmup to `lr` over `warmup` steps, constant afterwards.
pub fn lr_schedule(step: usize, lr: f64, warmup: usize) -> f64 {
    if step < warmup {
        lr * (step + 1) as f64 / warmup as f64
    } else {
        lr
    }
}

/// One decoupled AdamW update:
/// `theta -= lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`.
pub fn adamw_step(
    params: &mut ToyParams,
    grads: &ToyParams,
    state: &mut AdamWState,
    lr_t: f64,
    weight_decay: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::Shape("optimizer buffers do not match the parameters".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    let gs = grads.slices();
    let ms = state.m.slices_mut();
    let vs = state.v.slices_mut();
    for (((theta, g), m), v) in params.slices_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        for i in 0..theta.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= lr_t * (m_hat / (v_hat.sqrt() + EPSILON) + weight_decay * theta[i]);
        }
    }
    Ok(())
}
