use serde::{Deserialize, Serialize};

use super::ParameterSet;

/// Plain gradient descent: `p ← p − lr·g`. Skips the step if it would
/// produce a non-finite parameter.
pub fn sgd_step(params: &mut ParameterSet, grads: &ParameterSet, lr: f64) -> bool {
    let updated: Vec<f64> = params
        .values()
        .iter()
        .zip(grads.values())
        .map(|(p, g)| p - lr * g)
        .collect();
    if updated.iter().any(|v| !v.is_finite()) {
        log::warn!("skipping SGD step with non-finite result");
        return false;
    }
    params.values_mut().copy_from_slice(&updated);
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the whole gradient when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. Returns `false` (and leaves
    /// everything untouched) when the gradient is not finite.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> bool {
        assert_eq!(
            params.len(),
            self.m.len(),
            "optimizer state sized for a different network"
        );
        if !grads.is_finite() {
            log::warn!("skipping Adam step with non-finite gradient");
            return false;
        }
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = grads.l2_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g * scale;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        true
    }
}
