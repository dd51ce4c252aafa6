use serde::{Deserialize, Serialize};

use super::{FcnModel, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self { rho: 0.95, epsilon: 1e-6 }
    }
}

/// One step of the per-parameter update
///
/// ```text
/// E[g²]  ← ρ·E[g²] + (1−ρ)·g²
/// Δ      = −√(E[Δx²] + ε) / √(E[g²] + ε) · g
/// E[Δx²] ← ρ·E[Δx²] + (1−ρ)·Δ²
/// θ      ← θ + Δ
/// ```
pub fn adadelta_update(model: &mut FcnModel, grads: &Gradients, cfg: &AdadeltaConfig) {
    assert_eq!(grads.values.len(), model.params.len(), "gradient layout mismatch");
    let AdadeltaConfig { rho, epsilon } = *cfg;
    for (((theta, eg), ex), &g) in model
        .params
        .iter_mut()
        .zip(model.sq_grad.iter_mut())
        .zip(model.sq_step.iter_mut())
        .zip(&grads.values)
    {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let delta = -((*ex + epsilon).sqrt() / (*eg + epsilon).sqrt()) * g;
        *ex = rho * *ex + (1.0 - rho) * delta * delta;
        *theta += delta;
    }
}
