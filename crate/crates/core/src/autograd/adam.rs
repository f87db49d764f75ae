use serde::{Deserialize, Serialize};

use super::{AutogradError, Tensor};

/// Adam with coupled L2 weight decay: the decay term is added to the
/// gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    /// Steps taken so far.
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &[&Tensor]) -> Self {
        Self {
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

impl Adam {
    /// One bias-corrected update of every parameter. Increments `state.t` first.
    pub fn step(
        &self,
        params: &mut [&mut Tensor],
        grads: &[&[f64]],
        state: &mut AdamState,
    ) -> Result<(), AutogradError> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(AutogradError::ShapeMismatch {
                op: "adam",
                detail: format!(
                    "{} params, {} grads, {} moment buffers",
                    params.len(),
                    grads.len(),
                    state.m.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || state.m[i].len() != g.len() {
                return Err(AutogradError::ShapeMismatch {
                    op: "adam",
                    detail: format!("param {i}: {} values, {} grads", p.numel(), g.len()),
                });
            }
        }
        state.t += 1;
        let t = state.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut state.m[i];
            let v = &mut state.v[i];
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let grad = g[j] + self.weight_decay * *w;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * grad;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * grad * grad;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
