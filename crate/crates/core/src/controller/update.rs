//! Softmax weighting and the MPPI mean / covariance updates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One batch of sampled sequences with their costs and weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub latents: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.costs.len();
        if n == 0 {
            return Err(Error::Argument("empty sample batch".into()));
        }
        check_len("batch weights", n, self.weights.len())?;
        check_len("batch controls", n, self.controls.len())?;
        if !self.latents.is_empty() {
            check_len("batch latents", n, self.latents.len())?;
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument("batch weights must be finite and nonnegative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("batch weights sum to {s}")));
        }
        Ok(())
    }

    /// Index of the lowest-cost sample (first on ties).
    pub fn argmin(&self) -> Option<usize> {
        self.costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Softmax weights `w_i ∝ exp(−C̃_i/β)` after min-max normalizing the costs
/// to `[0, 1]`. Equal costs give uniform weights.
pub fn softmax_weights(costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::Argument("softmax over an empty cost array".into()));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("rollout cost".into()));
    }
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let normalized: Vec<f64> = if range > 0.0 {
        costs.iter().map(|c| (c - lo) / range).collect()
    } else {
        vec![0.0; costs.len()]
    };
    softmax_weights_unnormalized(&normalized, temperature)
}

/// Softmax weights on the raw costs, shifted by their minimum for stability.
pub fn softmax_weights_unnormalized(costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::Argument("softmax over an empty cost array".into()));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be positive, got {temperature}")));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("rollout cost".into()));
    }
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|c| (-(c - lo) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    Ok(w)
}

fn weighted_sum(rows: &[Vec<f64>], weights: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_len("weights", rows.len(), weights.len())?;
    let mut acc = vec![0.0; dim];
    for (row, &w) in rows.iter().zip(weights) {
        check_len("sample", dim, row.len())?;
        for (a, r) in acc.iter_mut().zip(row) {
            *a += w * r;
        }
    }
    Ok(acc)
}

fn blend(prior: &[f64], target: &[f64], step: f64) -> Vec<f64> {
    if step == 1.0 {
        return target.to_vec();
    }
    prior.iter().zip(target).map(|(p, t)| (1.0 - step) * p + step * t).collect()
}

fn check_step(step: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&step) {
        return Err(Error::Argument(format!("step size {step} not in [0, 1]")));
    }
    Ok(())
}

/// `Σ w_i û_i`.
pub fn weighted_control_mean(batch: &SampleBatch, dim: usize) -> Result<Vec<f64>> {
    weighted_sum(&batch.controls, &batch.weights, dim)
}

/// `Σ w_i ẑ_i`.
pub fn weighted_latent_mean(batch: &SampleBatch, dim: usize) -> Result<Vec<f64>> {
    if batch.latents.is_empty() {
        return Err(Error::Argument("batch carries no latents".into()));
    }
    weighted_sum(&batch.latents, &batch.weights, dim)
}

/// `μ = (1−γ)μ̃ + γ Σ w_i û_i`.
pub fn mppi_control_update(prior_mean: &[f64], batch: &SampleBatch, step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let target = weighted_control_mean(batch, prior_mean.len())?;
    Ok(blend(prior_mean, &target, step))
}

/// `μ = (1−γ)μ̃ + γ Σ w_i ẑ_i`.
pub fn mppi_latent_update(prior_mean: &[f64], batch: &SampleBatch, step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let target = weighted_latent_mean(batch, prior_mean.len())?;
    Ok(blend(prior_mean, &target, step))
}

/// Regularizer added to adapted covariances.
pub const COVARIANCE_JITTER: f64 = 1e-8;

/// `Σ ← (1−γ)Σ̃ + γ Σ_i w_i (û_i−μ)(û_i−μ)ᵀ + εI`, centred on the updated
/// mean `μ`. A zero step returns the prior unchanged.
pub fn covariance_adapt(prior: &DMatrix<f64>, mean: &[f64], batch: &SampleBatch, step: f64) -> Result<DMatrix<f64>> {
    check_step(step)?;
    let d = mean.len();
    check_len("covariance", d, prior.nrows())?;
    check_len("covariance", d, prior.ncols())?;
    if step == 0.0 {
        return Ok(prior.clone());
    }
    check_len("weights", batch.controls.len(), batch.weights.len())?;
    let mut emp = DMatrix::<f64>::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (u, &w) in batch.controls.iter().zip(&batch.weights) {
        check_len("sample", d, u.len())?;
        if w == 0.0 {
            continue;
        }
        for ((df, a), m) in diff.iter_mut().zip(u).zip(mean) {
            *df = a - m;
        }
        for i in 0..d {
            let wi = w * diff[i];
            for j in 0..d {
                emp[(i, j)] += wi * diff[j];
            }
        }
    }
    let mut out = prior * (1.0 - step) + emp * step;
    for i in 0..d {
        out[(i, i)] += COVARIANCE_JITTER;
    }
    Ok(out)
}
