use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gaussian::LatentGaussian;
use super::halton::{normal_points, seeded_start};
use super::shift::{shift_standard, ShiftKind, ShiftModel, ShiftState};
use super::update::{mppi_latent_update, softmax_weights, SampleBatch};
use super::{evaluate_costs, ActionMode, Controller, PhaseTiming, RolloutModel, StepOutput, Stopwatch};
use crate::error::{check_len, Error, Result};
use crate::flow::{BoundsMode, FlowModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfmpcConfig {
    pub samples: usize,
    pub temperature: f64,
    pub step_size: f64,
    /// Fixed diagonal variance of the latent Gaussian.
    pub latent_var: f64,
    /// Add the pulled-back, time-shifted previous control mean as a sample.
    #[serde(default)]
    pub shifted_sample: bool,
    #[serde(default)]
    pub action: ActionMode,
    #[serde(default)]
    pub seed: u64,
}

impl NfmpcConfig {
    pub fn new(samples: usize) -> Self {
        Self {
            samples,
            temperature: 1e-32,
            step_size: 1.0,
            latent_var: 1.0,
            shifted_sample: false,
            action: ActionMode::Deterministic,
            seed: 0,
        }
    }
}

/// Everything one NFMPC step needs for the backward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub context: Vec<f64>,
    /// Pre-update latent mean μ̃_t.
    pub prior_mean: Vec<f64>,
    /// Post-update latent mean μ_t.
    pub mean: Vec<f64>,
    pub batch: SampleBatch,
    /// Log-determinants of `push` at each latent sample.
    pub push_log_dets: Vec<f64>,
    /// Recurrent shift state fed to the shift that follows this step.
    pub shift_state: ShiftState,
}

/// MPPI whose mean update and warm start live in the latent space of a
/// conditional normalizing flow.
#[derive(Debug, Clone)]
pub struct Nfmpc {
    config: NfmpcConfig,
    flow: Arc<FlowModel>,
    shift: Arc<ShiftModel>,
    latent: LatentGaussian,
    normals: Vec<Vec<f64>>,
    shift_state: ShiftState,
    /// Updated mean and context of the previous step.
    previous: Option<(Vec<f64>, Vec<f64>)>,
    rng: ChaCha8Rng,
    recording: bool,
    records: Vec<StepRecord>,
}

impl Nfmpc {
    pub fn new(config: NfmpcConfig, flow: Arc<FlowModel>, shift: Arc<ShiftModel>) -> Result<Self> {
        let dim = flow.dim();
        check_len("shift width", dim, shift.dim())?;
        let reserved = 1 + usize::from(config.shifted_sample);
        if config.samples < reserved {
            return Err(Error::Config(format!("NFMPC needs at least {reserved} samples")));
        }
        let latent = LatentGaussian::isotropic(dim, config.latent_var, config.temperature, config.step_size)?;
        let normals = normal_points(seeded_start(config.seed, config.samples), config.samples - reserved, dim)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let shift_state = shift.initial_state();
        Ok(Self {
            config,
            flow,
            shift,
            latent,
            normals,
            shift_state,
            previous: None,
            rng,
            recording: false,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &NfmpcConfig {
        &self.config
    }

    pub fn flow(&self) -> &Arc<FlowModel> {
        &self.flow
    }

    pub fn shift(&self) -> &Arc<ShiftModel> {
        &self.shift
    }

    pub fn latent(&self) -> &LatentGaussian {
        &self.latent
    }

    /// Current latent mean (pre-update until the next step runs).
    pub fn mean(&self) -> &[f64] {
        &self.latent.mean
    }

    pub fn set_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        check_len("latent mean", self.flow.dim(), mean.len())?;
        self.latent.mean = mean;
        Ok(())
    }

    /// Keep a `StepRecord` for every subsequent `step`.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn take_records(&mut self) -> Vec<StepRecord> {
        std::mem::take(&mut self.records)
    }

    fn control_dim(&self) -> usize {
        self.flow.config().control_dim
    }

    /// Latent samples: the mean, optionally the shifted previous solution,
    /// then the fixed quasi-random perturbations.
    pub fn latent_samples(&self, context: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mean = &self.latent.mean;
        let std = self.latent.std_dev();
        let mut out = Vec::with_capacity(self.config.samples);
        out.push(mean.clone());
        if self.config.shifted_sample {
            let extra = match &self.previous {
                Some((prev, prev_ctx)) => {
                    let u = self.flow.push(prev, prev_ctx)?.output;
                    let shifted = shift_standard(&u, self.control_dim());
                    self.flow.pull_with_mode(&shifted, context, BoundsMode::Tolerant)?.output
                }
                None => mean.clone(),
            };
            out.push(extra);
        }
        for q in &self.normals {
            out.push(mean.iter().zip(&std).zip(q).map(|((m, s), q)| m + s * q).collect());
        }
        Ok(out)
    }

    /// Samples, scores and applies the latent mean update. Returns the batch
    /// and the push log-determinants.
    fn update(
        &mut self,
        state: &[f64],
        model: &dyn RolloutModel,
        context: &[f64],
        timing: &mut PhaseTiming,
    ) -> Result<(SampleBatch, Vec<f64>)> {
        let mut sw = Stopwatch::start();
        let latents = self.latent_samples(context)?;
        timing.sampling += sw.lap();
        let flow = &self.flow;
        let pushed: Vec<_> = latents
            .par_iter()
            .map(|z| flow.push(z, context))
            .collect::<Result<Vec<_>>>()?;
        let (controls, log_dets): (Vec<_>, Vec<_>) = pushed.into_iter().map(|e| (e.output, e.log_det)).unzip();
        timing.flow += sw.lap();
        let costs = evaluate_costs(model, state, &controls);
        timing.rollout += sw.lap();
        let weights = softmax_weights(&costs, self.latent.temperature)?;
        let batch = SampleBatch {
            latents,
            controls,
            costs,
            weights,
        };
        self.latent.mean = mppi_latent_update(&self.latent.mean, &batch, self.latent.step_size)?;
        timing.update += sw.lap();
        Ok((batch, log_dets))
    }

    pub fn select_action(&mut self, context: &[f64], mode: ActionMode) -> Result<Vec<f64>> {
        let z = match mode {
            ActionMode::Deterministic => self.latent.mean.clone(),
            ActionMode::Stochastic => {
                let std = self.latent.std_dev();
                let mut z = self.latent.mean.clone();
                for (zi, s) in z.iter_mut().zip(&std) {
                    let e: f64 = StandardNormal.sample(&mut self.rng);
                    *zi += s * e;
                }
                z
            }
        };
        let u = self.flow.push(&z, context)?.output;
        Ok(u[..self.control_dim()].to_vec())
    }

    /// Maps the updated mean to the next step's prior mean.
    fn apply_shift(&mut self, context: &[f64]) -> Result<()> {
        let next = match self.shift.kind() {
            ShiftKind::Control => {
                let u = self.flow.push(&self.latent.mean, context)?.output;
                let shifted = shift_standard(&u, self.control_dim());
                self.flow.pull_with_mode(&shifted, context, BoundsMode::Tolerant)?.output
            }
            _ => {
                let (next, state) = self.shift.apply(&self.latent.mean, &self.shift_state)?;
                self.shift_state = state;
                next
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shifted latent mean".into()));
        }
        self.latent.mean = next;
        Ok(())
    }
}

impl Controller for Nfmpc {
    fn name(&self) -> &'static str {
        "nfmpc"
    }

    fn reset(&mut self, _state: &[f64], context: &[f64]) -> Result<()> {
        check_len("flow context", self.flow.context_dim(), context.len())?;
        self.latent.mean = vec![0.0; self.flow.dim()];
        self.shift_state = self.shift.initial_state();
        self.previous = None;
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.records.clear();
        Ok(())
    }

    fn step(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64]) -> Result<StepOutput> {
        let mut timing = PhaseTiming::default();
        let prior_mean = self.latent.mean.clone();
        let (batch, push_log_dets) = self.update(state, model, context, &mut timing)?;
        let mut sw = Stopwatch::start();
        let action = self.select_action(context, self.config.action)?;
        timing.flow += sw.lap();
        if self.recording {
            self.records.push(StepRecord {
                context: context.to_vec(),
                prior_mean,
                mean: self.latent.mean.clone(),
                batch,
                push_log_dets,
                shift_state: self.shift_state.clone(),
            });
        }
        self.previous = Some((self.latent.mean.clone(), context.to_vec()));
        self.apply_shift(context)?;
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
