use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Moment buffers for one parameter array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One AdamW update of a single array, with `step` the 1-based index of this
/// update. Weight decay is decoupled: `θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut Moments,
    step: u64,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::dim(format!(
            "AdamW: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if step == 0 {
        return Err(Error::Parameter("AdamW step index starts at 1".into()));
    }
    let c1 = 1.0 - BETA1.powi(step as i32);
    let c2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        let theta = params[i];
        params[i] = theta - lr * weight_decay * theta - lr * m_hat / (v_hat.sqrt() + EPS);
    }
    Ok(())
}

/// AdamW over every array of one [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub weight_decay: f64,
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        AdamW {
            weight_decay,
            step: 0,
            moments: store.iter().map(|(_, t)| Moments::zeros(t.len())).collect(),
        }
    }

    /// Apply the store's accumulated gradients, then clear them.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if self.moments.len() != store.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} arrays, store has {}",
                self.moments.len(),
                store.len()
            )));
        }
        self.step += 1;
        for ((value, grad), state) in store.values_and_grads_mut().zip(&mut self.moments) {
            adamw_step(
                value.data_mut(),
                grad,
                state,
                self.step,
                lr,
                self.weight_decay,
            )?;
        }
        store.zero_grad();
        Ok(())
    }
}
