use serde::{Deserialize, Serialize};

use crate::solver::{GroupKind, Gradients, UnrolledNet};

/// Adaptive-moment optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Learning rate for thresholds; defaults to `learning_rate`.
    pub threshold_learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            threshold_learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &UnrolledNet) -> Self {
        let sizes: Vec<usize> = net.groups().iter().map(|g| g.values.len()).collect();
        AdamState {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam step on every group that carries a gradient;
/// thresholds are projected onto `θ ≥ 0` afterwards.
pub fn optimizer_step(net: &mut UnrolledNet, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let theta_lr = cfg.threshold_learning_rate.unwrap_or(cfg.learning_rate);
    for (gi, (kind, values)) in net.groups_mut().into_iter().enumerate() {
        let Some(g) = grads.groups.get(gi).and_then(|g| g.as_ref()) else {
            continue;
        };
        let lr = if kind == GroupKind::Threshold { theta_lr } else { cfg.learning_rate };
        let m = &mut state.m[gi];
        let v = &mut state.v[gi];
        for j in 0..values.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            values[j] -= lr * mh / (vh.sqrt() + cfg.eps);
            if kind == GroupKind::Threshold && values[j] < 0.0 {
                values[j] = 0.0;
            }
        }
    }
}
