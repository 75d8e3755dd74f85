use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bspline::bspline_smooth;
use super::gaussian::ControlGaussian;
use super::halton::{normal_points, seeded_start};
use super::mppi::SplineConfig;
use super::shift::shift_standard;
use super::update::{covariance_adapt, mppi_control_update, softmax_weights, SampleBatch};
use super::{clamp_sequence, clamp_to, evaluate_costs, ActionMode, Controller, PhaseTiming, RolloutModel, StepOutput, Stopwatch};
use crate::error::{Error, Result};
use crate::flow::{BoundsMode, ControlBounds, FlowModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMppiConfig {
    pub samples: usize,
    pub temperature: f64,
    pub step_size: f64,
    /// Initial isotropic control-space covariance of the Gaussian half.
    pub covariance: f64,
    #[serde(default)]
    pub covariance_step: f64,
    /// Variance of the fixed latent Gaussian feeding the flow half.
    pub latent_var: f64,
    /// Weight of the latent deviation penalty on flow samples.
    pub penalty: f64,
    #[serde(default)]
    pub action: ActionMode,
    #[serde(default)]
    pub bounds: Option<ControlBounds>,
    #[serde(default)]
    pub spline: Option<SplineConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl FlowMppiConfig {
    pub fn new(samples: usize) -> Self {
        Self {
            samples,
            temperature: 1e-32,
            step_size: 1.0,
            covariance: 1.0,
            covariance_step: 0.0,
            latent_var: 1.0,
            penalty: 1e-3,
            action: ActionMode::Deterministic,
            bounds: None,
            spline: None,
            seed: 0,
        }
    }
}

/// Control-space MPPI drawing half of its samples from a flow and half from
/// Gaussian perturbations of the control mean.
#[derive(Debug, Clone)]
pub struct FlowMppi {
    config: FlowMppiConfig,
    flow: Arc<FlowModel>,
    dist: ControlGaussian,
    /// Fixed latent draws for the flow half (the first is the latent origin).
    flow_latents: Vec<Vec<f64>>,
    /// Fixed standard-normal points for the Gaussian half (the mean itself
    /// is added separately).
    normals: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    last_batch: Option<SampleBatch>,
}

impl FlowMppi {
    pub fn new(config: FlowMppiConfig, flow: Arc<FlowModel>) -> Result<Self> {
        if config.samples < 2 || config.samples % 2 != 0 {
            return Err(Error::Config(format!(
                "FlowMPPI needs an even sample count of at least 2, got {}",
                config.samples
            )));
        }
        if !(config.latent_var > 0.0) || config.penalty < 0.0 {
            return Err(Error::Config("invalid FlowMPPI latent variance or penalty".into()));
        }
        let dim = flow.dim();
        let half = config.samples / 2;
        let start = seeded_start(config.seed, config.samples);
        let std = config.latent_var.sqrt();
        let mut flow_latents = vec![vec![0.0; dim]];
        for q in normal_points(start, half - 1, dim)? {
            flow_latents.push(q.into_iter().map(|v| std * v).collect());
        }
        let normals = normal_points(start + (half - 1) as u64, half - 1, dim)?;
        let dist = ControlGaussian::isotropic(dim, config.covariance, config.temperature, config.step_size)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            flow,
            dist,
            flow_latents,
            normals,
            rng,
            last_batch: None,
        })
    }

    pub fn config(&self) -> &FlowMppiConfig {
        &self.config
    }

    pub fn mean(&self) -> &[f64] {
        &self.dist.mean
    }

    pub fn distribution(&self) -> &ControlGaussian {
        &self.dist
    }

    pub fn last_batch(&self) -> Option<&SampleBatch> {
        self.last_batch.as_ref()
    }

    fn control_dim(&self) -> usize {
        self.flow.config().control_dim
    }

    fn update(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64], timing: &mut PhaseTiming) -> Result<()> {
        let mut sw = Stopwatch::start();
        let mut gauss = Vec::with_capacity(self.normals.len() + 1);
        let mut mean = self.dist.mean.clone();
        clamp_sequence(&mut mean, self.config.bounds.as_ref());
        gauss.push(mean);
        for q in &self.normals {
            let mut u = self.dist.transform(q);
            if let Some(s) = self.config.spline {
                u = bspline_smooth(&u, self.control_dim(), s.degree, s.knots)?;
            }
            clamp_sequence(&mut u, self.config.bounds.as_ref());
            gauss.push(u);
        }
        timing.sampling += sw.lap();
        let flow = &self.flow;
        let flow_controls: Vec<Vec<f64>> = self
            .flow_latents
            .par_iter()
            .map(|z| flow.push(z, context).map(|e| e.output))
            .collect::<Result<_>>()?;
        let penalties: Vec<f64> = if self.config.penalty > 0.0 {
            let anchor = flow.pull_with_mode(&self.dist.mean, context, BoundsMode::Tolerant)?.output;
            self.flow_latents
                .iter()
                .map(|z| self.config.penalty * z.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect()
        } else {
            vec![0.0; self.flow_latents.len()]
        };
        timing.flow += sw.lap();
        let mut controls = flow_controls;
        controls.extend(gauss);
        let mut costs = evaluate_costs(model, state, &controls);
        for (c, p) in costs.iter_mut().zip(&penalties) {
            *c += p;
        }
        timing.rollout += sw.lap();
        let weights = softmax_weights(&costs, self.dist.temperature)?;
        let batch = SampleBatch {
            latents: Vec::new(),
            controls,
            costs,
            weights,
        };
        let mean = mppi_control_update(&self.dist.mean, &batch, self.dist.step_size)?;
        if self.config.covariance_step > 0.0 {
            let cov = covariance_adapt(self.dist.covariance(), &mean, &batch, self.config.covariance_step)?;
            self.dist.set_covariance(cov)?;
        }
        self.dist.mean = mean;
        self.last_batch = Some(batch);
        timing.update += sw.lap();
        Ok(())
    }

    pub fn select_action(&mut self, mode: ActionMode) -> Vec<f64> {
        let m = self.control_dim();
        let mut action = match mode {
            ActionMode::Deterministic => self.dist.mean[..m].to_vec(),
            ActionMode::Stochastic => {
                let eps: Vec<f64> = (0..self.dist.dim()).map(|_| StandardNormal.sample(&mut self.rng)).collect();
                self.dist.transform(&eps)[..m].to_vec()
            }
        };
        clamp_to(&mut action, self.config.bounds.as_ref());
        action
    }
}

impl Controller for FlowMppi {
    fn name(&self) -> &'static str {
        "flowmppi"
    }

    fn reset(&mut self, _state: &[f64], context: &[f64]) -> Result<()> {
        let d = self.flow.dim();
        self.dist.mean = self.flow.push(&vec![0.0; d], context)?.output;
        self.dist
            .set_covariance(DMatrix::from_diagonal_element(d, d, self.config.covariance))?;
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.last_batch = None;
        Ok(())
    }

    fn step(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64]) -> Result<StepOutput> {
        let mut timing = PhaseTiming::default();
        self.update(state, model, context, &mut timing)?;
        let mut sw = Stopwatch::start();
        let action = self.select_action(self.config.action);
        self.dist.mean = shift_standard(&self.dist.mean, self.control_dim());
        timing.update += sw.lap();
        Ok(StepOutput { action, timing })
    }

    fn warm_start(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64], iterations: usize) -> Result<()> {
        if iterations == 0 {
            return Err(Error::Argument("warm start needs at least one iteration".into()));
        }
        let mut timing = PhaseTiming::default();
        for _ in 0..iterations {
            self.update(state, model, context, &mut timing)?;
        }
        Ok(())
    }
}
