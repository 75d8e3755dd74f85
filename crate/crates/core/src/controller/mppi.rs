use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bspline::bspline_smooth;
use super::gaussian::ControlGaussian;
use super::halton::{normal_points, seeded_start};
use super::update::{covariance_adapt, mppi_control_update, softmax_weights, SampleBatch};
use super::{clamp_sequence, clamp_to, evaluate_costs, ActionMode, Controller, PhaseTiming, RolloutModel, StepOutput, Stopwatch};
use crate::error::{check_len, Error, Result};
use crate::flow::ControlBounds;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MppiShift {
    #[default]
    Standard,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub degree: usize,
    pub knots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MppiConfig {
    pub control_dim: usize,
    pub horizon: usize,
    pub samples: usize,
    pub temperature: f64,
    pub step_size: f64,
    /// Initial (isotropic) control covariance.
    pub covariance: f64,
    /// Covariance adaptation step; 0 keeps the covariance fixed.
    #[serde(default)]
    pub covariance_step: f64,
    #[serde(default)]
    pub shift: MppiShift,
    #[serde(default)]
    pub action: ActionMode,
    #[serde(default)]
    pub bounds: Option<ControlBounds>,
    #[serde(default)]
    pub spline: Option<SplineConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl MppiConfig {
    pub fn new(control_dim: usize, horizon: usize, samples: usize) -> Self {
        Self {
            control_dim,
            horizon,
            samples,
            temperature: 1e-32,
            step_size: 1.0,
            covariance: 1.0,
            covariance_step: 0.0,
            shift: MppiShift::Standard,
            action: ActionMode::Deterministic,
            bounds: None,
            spline: None,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.control_dim * self.horizon
    }

    fn validate(&self) -> Result<()> {
        if self.dim() == 0 || self.samples == 0 {
            return Err(Error::Config("MPPI needs positive dimensions and sample count".into()));
        }
        if !(0.0..=1.0).contains(&self.covariance_step) {
            return Err(Error::Config("covariance step must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Gaussian MPPI in control space with optional full-covariance adaptation.
#[derive(Debug, Clone)]
pub struct Mppi {
    config: MppiConfig,
    dist: ControlGaussian,
    normals: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    last_batch: Option<SampleBatch>,
}

impl Mppi {
    pub fn new(config: MppiConfig) -> Result<Self> {
        config.validate()?;
        let dist = ControlGaussian::isotropic(config.dim(), config.covariance, config.temperature, config.step_size)?;
        let normals = normal_points(seeded_start(config.seed, config.samples), config.samples - 1, config.dim())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            dist,
            normals,
            rng,
            last_batch: None,
        })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn distribution(&self) -> &ControlGaussian {
        &self.dist
    }

    pub fn mean(&self) -> &[f64] {
        &self.dist.mean
    }

    pub fn set_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        check_len("control mean", self.config.dim(), mean.len())?;
        self.dist.mean = mean;
        Ok(())
    }

    pub fn last_batch(&self) -> Option<&SampleBatch> {
        self.last_batch.as_ref()
    }

    /// The mean followed by one perturbation per fixed quasi-random point,
    /// all clipped to the bounds when set.
    pub fn samples(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.config.samples);
        let mut mean = self.dist.mean.clone();
        clamp_sequence(&mut mean, self.config.bounds.as_ref());
        out.push(mean);
        for q in &self.normals {
            let mut u = self.dist.transform(q);
            if let Some(s) = self.config.spline {
                u = bspline_smooth(&u, self.config.control_dim, s.degree, s.knots)?;
            }
            clamp_sequence(&mut u, self.config.bounds.as_ref());
            out.push(u);
        }
        Ok(out)
    }

    fn update(&mut self, state: &[f64], model: &dyn RolloutModel, timing: &mut PhaseTiming) -> Result<()> {
        let mut sw = Stopwatch::start();
        let controls = self.samples()?;
        timing.sampling += sw.lap();
        let costs = evaluate_costs(model, state, &controls);
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
        let m = self.config.control_dim;
        let mut action = match mode {
            ActionMode::Deterministic => self.dist.mean[..m].to_vec(),
            ActionMode::Stochastic => {
                let eps: Vec<f64> = (0..self.config.dim()).map(|_| StandardNormal.sample(&mut self.rng)).collect();
                self.dist.transform(&eps)[..m].to_vec()
            }
        };
        clamp_to(&mut action, self.config.bounds.as_ref());
        action
    }

    fn reset_distribution(&mut self) -> Result<()> {
        let d = self.config.dim();
        self.dist.mean = vec![0.0; d];
        self.dist
            .set_covariance(DMatrix::from_diagonal_element(d, d, self.config.covariance))?;
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.last_batch = None;
        Ok(())
    }
}

impl Controller for Mppi {
    fn name(&self) -> &'static str {
        "mppi"
    }

    fn reset(&mut self, _state: &[f64], _context: &[f64]) -> Result<()> {
        self.reset_distribution()
    }

    fn step(&mut self, state: &[f64], model: &dyn RolloutModel, _context: &[f64]) -> Result<StepOutput> {
        let mut timing = PhaseTiming::default();
        self.update(state, model, &mut timing)?;
        let mut sw = Stopwatch::start();
        let action = self.select_action(self.config.action);
        if self.config.shift == MppiShift::Standard {
            self.dist.mean = super::shift_standard(&self.dist.mean, self.config.control_dim);
        }
        timing.update += sw.lap();
        Ok(StepOutput { action, timing })
    }

    fn warm_start(&mut self, state: &[f64], model: &dyn RolloutModel, _context: &[f64], iterations: usize) -> Result<()> {
        if iterations == 0 {
            return Err(Error::Argument("warm start needs at least one iteration".into()));
        }
        let mut timing = PhaseTiming::default();
        for _ in 0..iterations {
            self.update(state, model, &mut timing)?;
        }
        Ok(())
    }
}
