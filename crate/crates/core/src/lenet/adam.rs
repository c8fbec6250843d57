use super::{Params, TrainConfig};
use crate::lenet::LeNetModel;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params<f64>,
    pub v: Params<f64>,
    pub t: u64,
}

impl Default for AdamState {
    fn default() -> Self {
        Self {
            m: Params::zeros(),
            v: Params::zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update on a flat tensor at step `t >= 1`.
pub fn adam_update(
    theta: &mut [f32],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..theta.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let step = cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        theta[i] = (f64::from(theta[i]) - step) as f32;
    }
}

/// Advances the step counter and updates every tensor of `model`.
pub fn adam_step(
    model: &mut LeNetModel,
    grads: &Params<f64>,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t;
    let g = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((theta, g), m), v) in model
        .params
        .tensors_mut()
        .into_iter()
        .zip(g)
        .zip(ms)
        .zip(vs)
    {
        adam_update(theta, g, m, v, t, cfg);
    }
}
