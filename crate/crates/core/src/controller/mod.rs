//! The MPPI family: Gaussian MPPI in control space, NFMPC with latent-space
//! updates through a normalizing flow, and the FlowMPPI mixed-sampling
//! baseline.

mod bspline;
mod flowmppi;
mod gaussian;
mod halton;
mod mppi;
mod nfmpc;
mod normal;
mod shift;
mod update;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bspline::bspline_smooth;
pub use flowmppi::{FlowMppi, FlowMppiConfig};
pub use gaussian::{min_eigenvalue, ControlGaussian, LatentGaussian};
pub use halton::{first_primes, gaussian_from_halton, halton_sequence, normal_points, radical_inverse, seeded_start};
pub use mppi::{Mppi, MppiConfig, MppiShift, SplineConfig};
pub use nfmpc::{Nfmpc, NfmpcConfig, StepRecord};
pub use normal::standard_normal_quantile;
pub use shift::{shift_learned, shift_standard, ShiftConfig, ShiftKind, ShiftModel, ShiftState, ShiftTrace};
pub use update::{
    covariance_adapt, mppi_control_update, mppi_latent_update, softmax_weights, softmax_weights_unnormalized,
    weighted_control_mean, weighted_latent_mean, SampleBatch, COVARIANCE_JITTER,
};

use crate::error::Result;

/// Cost model used to score sampled control sequences. Implementations must
/// be pure so rollouts can be evaluated concurrently.
pub trait RolloutModel: Sync {
    fn control_dim(&self) -> usize;

    /// Total predicted cost (stage plus terminal) of a time-major control
    /// sequence started from `state`.
    fn trajectory_cost(&self, state: &[f64], controls: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    /// First control of the updated mean.
    #[default]
    Deterministic,
    /// First control of one sequence drawn from the updated distribution.
    Stochastic,
}

/// Wall-clock seconds spent in each phase of one controller step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub sampling: f64,
    pub flow: f64,
    pub rollout: f64,
    pub update: f64,
}

impl PhaseTiming {
    pub fn total(&self) -> f64 {
        self.sampling + self.flow + self.rollout + self.update
    }

    pub fn add(&mut self, other: &PhaseTiming) {
        self.sampling += other.sampling;
        self.flow += other.flow;
        self.rollout += other.rollout;
        self.update += other.update;
    }
}

pub(crate) struct Stopwatch(Instant);

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self(Instant::now())
    }

    /// Seconds since the last lap.
    pub(crate) fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let dt = now.duration_since(self.0).as_secs_f64();
        self.0 = now;
        dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub action: Vec<f64>,
    pub timing: PhaseTiming,
}

pub trait Controller {
    fn name(&self) -> &'static str;

    /// Prepares a new episode: resets the distribution and redraws the fixed
    /// quasi-random points.
    fn reset(&mut self, state: &[f64], context: &[f64]) -> Result<()>;

    /// One sample–weight–update cycle followed by action selection and the
    /// shift to the next step.
    fn step(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64]) -> Result<StepOutput>;

    /// Repeated update cycles at a fixed state, without shifting.
    fn warm_start(&mut self, state: &[f64], model: &dyn RolloutModel, context: &[f64], iterations: usize) -> Result<()>;
}

pub(crate) fn clamp_to(action: &mut [f64], bounds: Option<&crate::flow::ControlBounds>) {
    if let Some(b) = bounds {
        for ((a, lo), hi) in action.iter_mut().zip(&b.lower).zip(&b.upper) {
            *a = a.clamp(*lo, *hi);
        }
    }
}

/// Clips every timestep of a flat control sequence to the box.
pub(crate) fn clamp_sequence(controls: &mut [f64], bounds: Option<&crate::flow::ControlBounds>) {
    if let Some(b) = bounds {
        for chunk in controls.chunks_mut(b.lower.len().max(1)) {
            clamp_to(chunk, Some(b));
        }
    }
}

pub(crate) fn evaluate_costs(model: &dyn RolloutModel, state: &[f64], controls: &[Vec<f64>]) -> Vec<f64> {
    use rayon::prelude::*;
    controls.par_iter().map(|u| model.trajectory_cost(state, u)).collect()
}
