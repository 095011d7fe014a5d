//! AdamW, cosine annealing and global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per parameter tensor plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// m̂ = m/(1−β₁ᵗ)            v̂ = v/(1−β₂ᵗ)
/// w ← w − lr·(m̂/(√v̂ + ε) + wd·w)
/// ```
///
/// `None` gradients leave the parameter and its moments untouched.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[Option<&Tensor>],
    state: &mut AdamState,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adamw",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let Some(g) = grads[i] else { continue };
        if g.shape() != p.shape() {
            return Err(Error::shape("adamw", format!("grad {:?} for param {:?}", g.shape(), p.shape())));
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            *w -= lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * *w);
        }
    }
    Ok(())
}

/// `η_min + (η₀ − η_min)·(1 + cos(π·t/T_max))/2`; constant at `η_min` past `T_max`.
pub fn cosine_lr(t: f64, lr0: f64, eta_min: f64, t_max: f64) -> f64 {
    let t = t.min(t_max);
    eta_min + (lr0 - eta_min) * (1.0 + (std::f64::consts::PI * t / t_max).cos()) / 2.0
}

/// Global L2 norm over all gradients.
pub fn grad_norm(grads: &[&Tensor]) -> f64 {
    grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
}

/// Scales all gradients by `max_norm/‖g‖` when `‖g‖ > max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let total = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if total > max_norm {
        let k = max_norm / total;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
    total
}
