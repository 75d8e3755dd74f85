//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::params::{GradientRecord, ParamVector};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Applies one Adam update in place. `t` is the 1-based step index.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &GradientRecord,
    moments: &mut Moments,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    check_len("adam gradient", params.len(), grads.params.len())?;
    check_len("adam first moment", params.len(), moments.m.len())?;
    check_len("adam second moment", params.len(), moments.v.len())?;
    if t == 0 {
        return Err(Error::Argument("adam step index starts at 1".into()));
    }
    if let Some(seg) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of segment `{seg}`")));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t.min(i32::MAX as u64) as i32);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(&grads.params)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Optimizer state bundled with its step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub moments: Moments,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            moments: Moments::zeros(len),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamVector, grads: &GradientRecord) -> Result<()> {
        adam_step(params, grads, &mut self.moments, self.t + 1, &self.config)?;
        self.t += 1;
        Ok(())
    }
}
