use std::f64::consts::PI;

use crate::controller::{weighted_latent_mean, SampleBatch};
use crate::error::{check_len, Error, Result};
use crate::flow::{FlowEval, FlowModel};

/// A parameterized bijection viewed from the control side: everything the
/// gradient estimators need from a flow.
pub trait LatentMap: Sync {
    fn dim(&self) -> usize;

    fn context_dim(&self) -> usize;

    fn num_params(&self) -> usize;

    /// Control → latent, with the log-determinant of the map.
    fn pull(&self, u: &[f64], context: &[f64]) -> Result<FlowEval>;

    /// Evaluates `pull(u)` and accumulates into `grad` the parameter
    /// gradient of `vᵀ·pull(u) + κ·logdet_pull(u)`.
    fn pull_vjp(&self, u: &[f64], context: &[f64], v: &[f64], kappa: f64, grad: &mut [f64]) -> Result<FlowEval>;
}

impl LatentMap for FlowModel {
    fn dim(&self) -> usize {
        FlowModel::dim(self)
    }

    fn context_dim(&self) -> usize {
        FlowModel::context_dim(self)
    }

    fn num_params(&self) -> usize {
        FlowModel::num_params(self)
    }

    fn pull(&self, u: &[f64], context: &[f64]) -> Result<FlowEval> {
        FlowModel::pull(self, u, context)
    }

    fn pull_vjp(&self, u: &[f64], context: &[f64], v: &[f64], kappa: f64, grad: &mut [f64]) -> Result<FlowEval> {
        FlowModel::pull_vjp(self, u, context, v, kappa, grad)
    }
}

/// Upstream vector and log-determinant weight of one sample's pull VJP.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAdjoint {
    pub index: usize,
    pub v: Vec<f64>,
    pub kappa: f64,
}

fn log_normal(z: &[f64], mean: &[f64], var: f64) -> f64 {
    let sq: f64 = z.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * z.len() as f64 * (2.0 * PI * var).ln() - 0.5 * sq / var
}

fn check_var(var: f64) -> Result<()> {
    if var > 0.0 && var.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("latent variance must be positive, got {var}")))
    }
}

/// `Ĵ = −Σ w_i log π_θ(û_i)` from recorded latents and push log-determinants,
/// with `θ = (mean, var·I)`.
pub fn step_loss(batch: &SampleBatch, push_log_dets: &[f64], mean: &[f64], var: f64) -> Result<f64> {
    check_var(var)?;
    check_len("push log-determinants", batch.len(), push_log_dets.len())?;
    let mut loss = 0.0;
    for ((z, &w), &ld) in batch.latents.iter().zip(&batch.weights).zip(push_log_dets) {
        if w > 0.0 {
            check_len("latent sample", mean.len(), z.len())?;
            loss -= w * (log_normal(z, mean, var) - ld);
        }
    }
    Ok(loss)
}

/// Sums per-sample pull VJPs into a fresh gradient vector.
pub fn accumulate_pull_vjps<M: LatentMap + ?Sized>(
    map: &M,
    batch: &SampleBatch,
    context: &[f64],
    adjoints: &[SampleAdjoint],
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; map.num_params()];
    for a in adjoints {
        map.pull_vjp(&batch.controls[a.index], context, &a.v, a.kappa, &mut grad)?;
    }
    Ok(grad)
}

/// Gradient of `−Σ w_i log π_θ(û_i)` with the samples held fixed. Returns
/// the parameter gradient and the gradient with respect to the mean of θ.
pub fn loss_gradient<M: LatentMap + ?Sized>(
    map: &M,
    batch: &SampleBatch,
    mean: &[f64],
    var: f64,
    context: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_var(var)?;
    batch.validate()?;
    let d = map.dim();
    check_len("latent mean", d, mean.len())?;
    let mut grad = vec![0.0; map.num_params()];
    let mut dmean = vec![0.0; d];
    for (u, &w) in batch.controls.iter().zip(&batch.weights) {
        if w <= 0.0 {
            continue;
        }
        let z = map.pull(u, context)?.output;
        let v: Vec<f64> = z.iter().zip(mean).map(|(z, m)| w * (z - m) / var).collect();
        map.pull_vjp(u, context, &v, -w, &mut grad)?;
        for (g, vi) in dmean.iter_mut().zip(&v) {
            *g -= vi;
        }
    }
    Ok((grad, dmean))
}

/// The three terms of the approximate gradient of the latent update target
/// `Δμ = Σ w_i pull(û_i)` with respect to the flow parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxTerms {
    /// `Σ w_i [∂pull(û_i) + pull(û_i)·s_iᵀ]`, one row per latent dimension.
    pub m1: Vec<Vec<f64>>,
    /// `Σ w_i pull(û_i)`.
    pub m2: Vec<f64>,
    /// `Σ w_i s_i` with `s_i` the parameter score of the prior density.
    pub m3: Vec<f64>,
    /// `∂Δμ/∂μ̃`, row-major `d × d`.
    pub prior: Vec<Vec<f64>>,
}

impl ApproxTerms {
    /// `M1 − M2·M3ᵀ`.
    pub fn gradient(&self) -> Vec<Vec<f64>> {
        self.m1
            .iter()
            .zip(&self.m2)
            .map(|(row, &m2)| row.iter().zip(&self.m3).map(|(a, b)| a - m2 * b).collect())
            .collect()
    }
}

/// Dense `M1`, `M2`, `M3` for one batch drawn around `prior_mean`.
pub fn approx_delta_mu_grad<M: LatentMap + ?Sized>(
    map: &M,
    batch: &SampleBatch,
    prior_mean: &[f64],
    var: f64,
    context: &[f64],
) -> Result<ApproxTerms> {
    check_var(var)?;
    batch.validate()?;
    let d = map.dim();
    let p = map.num_params();
    check_len("prior mean", d, prior_mean.len())?;
    let m2 = weighted_latent_mean(batch, d)?;
    let mut m1 = vec![vec![0.0; p]; d];
    let mut m3 = vec![0.0; p];
    let mut prior = vec![vec![0.0; d]; d];
    for ((u, z), &w) in batch.controls.iter().zip(&batch.latents).zip(&batch.weights) {
        if w <= 0.0 {
            continue;
        }
        // score of log N(pull(u); μ̃, σ²) + logdet_pull(u)
        let v: Vec<f64> = z.iter().zip(prior_mean).map(|(z, m)| -(z - m) / var).collect();
        let mut score = vec![0.0; p];
        map.pull_vjp(u, context, &v, 1.0, &mut score)?;
        for (k, row) in m1.iter_mut().enumerate() {
            let mut unit = vec![0.0; d];
            unit[k] = 1.0;
            let mut jac = vec![0.0; p];
            map.pull_vjp(u, context, &unit, 0.0, &mut jac)?;
            for ((r, j), s) in row.iter_mut().zip(&jac).zip(&score) {
                *r += w * (j + z[k] * s);
            }
            for (l, pr) in prior[k].iter_mut().enumerate() {
                *pr += w * (z[k] - m2[k]) * (z[l] - prior_mean[l]) / var;
            }
        }
        for (m, s) in m3.iter_mut().zip(&score) {
            *m += w * s;
        }
    }
    Ok(ApproxTerms { m1, m2, m3, prior })
}

/// Per-sample adjoints of `gᵀΔμ` together with `gᵀ ∂Δμ/∂μ̃`.
pub fn delta_mu_adjoints(batch: &SampleBatch, prior_mean: &[f64], var: f64, g: &[f64]) -> Result<(Vec<SampleAdjoint>, Vec<f64>)> {
    check_var(var)?;
    let d = prior_mean.len();
    check_len("upstream gradient", d, g.len())?;
    let m2 = weighted_latent_mean(batch, d)?;
    let mut adjoints = Vec::new();
    let mut gprior = vec![0.0; d];
    for (i, (z, &w)) in batch.latents.iter().zip(&batch.weights).enumerate() {
        if w <= 0.0 {
            continue;
        }
        let a: f64 = g.iter().zip(z).zip(&m2).map(|((g, z), m)| g * (z - m)).sum();
        let mut v = vec![0.0; d];
        for (l, vl) in v.iter_mut().enumerate() {
            let r = (z[l] - prior_mean[l]) / var;
            *vl = w * g[l] - w * a * r;
            gprior[l] += w * a * r;
        }
        adjoints.push(SampleAdjoint { index: i, v, kappa: w * a });
    }
    Ok((adjoints, gprior))
}

/// `gᵀ(M1 − M2·M3ᵀ)` without forming the dense terms. Returns the parameter
/// gradient and `gᵀ ∂Δμ/∂μ̃`.
pub fn approx_delta_mu_vjp<M: LatentMap + ?Sized>(
    map: &M,
    batch: &SampleBatch,
    prior_mean: &[f64],
    var: f64,
    context: &[f64],
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    batch.validate()?;
    check_len("prior mean", map.dim(), prior_mean.len())?;
    let (adjoints, gprior) = delta_mu_adjoints(batch, prior_mean, var, g)?;
    let grad = accumulate_pull_vjps(map, batch, context, &adjoints)?;
    Ok((grad, gprior))
}

/// Adjoints of one step of the episode loss: the direct loss term at the
/// updated mean plus the chain through `μ = (1−γ)μ̃ + γΔμ`. `gmean` is the
/// gradient reaching the updated mean from later steps. Returns the
/// per-sample adjoints and the gradient reaching the prior mean.
pub fn step_adjoints(
    batch: &SampleBatch,
    prior_mean: &[f64],
    mean: &[f64],
    var: f64,
    step_size: f64,
    gmean: &[f64],
) -> Result<(Vec<SampleAdjoint>, Vec<f64>)> {
    check_var(var)?;
    let d = mean.len();
    check_len("prior mean", d, prior_mean.len())?;
    check_len("mean gradient", d, gmean.len())?;
    let mut total = gmean.to_vec();
    for (z, &w) in batch.latents.iter().zip(&batch.weights) {
        if w > 0.0 {
            for ((t, zl), ml) in total.iter_mut().zip(z).zip(mean) {
                *t -= w * (zl - ml) / var;
            }
        }
    }
    let g: Vec<f64> = total.iter().map(|t| step_size * t).collect();
    let (mut adjoints, mut gprior) = delta_mu_adjoints(batch, prior_mean, var, &g)?;
    for a in &mut adjoints {
        let w = batch.weights[a.index];
        let z = &batch.latents[a.index];
        for ((v, zl), ml) in a.v.iter_mut().zip(z).zip(mean) {
            *v += w * (zl - ml) / var;
        }
        a.kappa -= w;
    }
    for (gp, t) in gprior.iter_mut().zip(&total) {
        *gp += (1.0 - step_size) * t;
    }
    Ok((adjoints, gprior))
}
