use std::sync::Arc;

use nfmpc::controller::{Controller, FlowMppi, FlowMppiConfig, Mppi, MppiConfig, Nfmpc, NfmpcConfig, ShiftModel, SplineConfig};
use nfmpc::envs::{simulate, EnvContext, EpisodeConfig, PlanarTasks, CONTROL_DIM};
use nfmpc::flow::{ControlBounds, FlowModel};
use rayon::prelude::*;

use crate::config::{ControllerKind, ExperimentConfig};
use crate::error::{BenchError, Result};
use crate::metrics::{aggregate, EpisodeRecord, MetricsSummary, TimingRecord};

/// Learned models shared by every episode of an experiment.
#[derive(Debug, Clone)]
pub struct Models {
    pub flow: Option<Arc<FlowModel>>,
    pub shift: Arc<ShiftModel>,
}

impl Models {
    /// Loads and checks the checkpoints the selected controllers need.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let dim = CONTROL_DIM * config.horizon;
        let flow = match &config.checkpoints.flow {
            Some(path) if config.controllers.iter().any(|c| c.needs_flow()) => {
                let flow = FlowModel::load(path).map_err(|e| BenchError::parse(path, e))?;
                let fc = flow.config();
                if fc.control_dim != CONTROL_DIM || fc.horizon != config.horizon {
                    return Err(BenchError::Config(format!(
                        "flow checkpoint {} plans {}x{} controls, the experiment needs {}x{}",
                        path.display(),
                        fc.horizon,
                        fc.control_dim,
                        config.horizon,
                        CONTROL_DIM
                    )));
                }
                if fc.context_dim != config.context_dim() {
                    return Err(BenchError::Config(format!(
                        "flow checkpoint {} expects {} context features, the environment provides {}",
                        path.display(),
                        fc.context_dim,
                        config.context_dim()
                    )));
                }
                Some(Arc::new(flow))
            }
            _ => None,
        };
        let shift = match &config.checkpoints.shift {
            Some(path) if !config.checkpoints.disable_shift => {
                let shift = ShiftModel::load(path).map_err(|e| BenchError::parse(path, e))?;
                if shift.dim() != dim {
                    return Err(BenchError::Config(format!(
                        "shift checkpoint {} has width {}, expected {dim}",
                        path.display(),
                        shift.dim()
                    )));
                }
                shift
            }
            _ => ShiftModel::identity(dim),
        };
        Ok(Self {
            flow,
            shift: Arc::new(shift),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Experiment {
    pub records: Vec<EpisodeRecord>,
    pub timings: Vec<TimingRecord>,
    pub summary: MetricsSummary,
}

impl ExperimentConfig {
    pub fn tasks(&self) -> PlanarTasks {
        PlanarTasks {
            kind: self.env,
            params: self.env_params.clone(),
            episode: self.episode.clone(),
        }
    }

    pub fn env_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.episodes as u64).map(|k| self.env_seed.wrapping_add(k))
    }

    fn bounds(&self) -> ControlBounds {
        let b = self.hyperparameters.action_bound;
        ControlBounds {
            lower: vec![-b; CONTROL_DIM],
            upper: vec![b; CONTROL_DIM],
        }
    }

    /// A fresh controller of the given kind and sample count.
    pub fn controller(&self, kind: ControllerKind, samples: usize, models: &Models) -> Result<Box<dyn Controller>> {
        let h = &self.hyperparameters;
        let flow = || {
            models
                .flow
                .clone()
                .ok_or_else(|| BenchError::Config(format!("{kind} needs a flow checkpoint")))
        };
        Ok(match kind {
            ControllerKind::Mppi => {
                let mut c = MppiConfig::new(CONTROL_DIM, self.horizon, samples);
                c.temperature = h.temperature;
                c.covariance = h.mppi_covariance;
                c.step_size = h.mppi_step_size;
                c.covariance_step = h.mppi_covariance_step;
                c.spline = h.mppi_spline_knots.map(|knots| SplineConfig { degree: 3, knots });
                c.bounds = Some(self.bounds());
                c.seed = self.seed;
                Box::new(Mppi::new(c)?)
            }
            ControllerKind::Flowmppi => {
                let mut c = FlowMppiConfig::new(samples);
                c.temperature = h.temperature;
                c.step_size = h.mppi_step_size;
                c.covariance = h.flowmppi_covariance;
                c.covariance_step = h.mppi_covariance_step;
                c.latent_var = h.flowmppi_latent_var;
                c.penalty = h.flowmppi_penalty;
                c.bounds = Some(self.bounds());
                c.seed = self.seed;
                Box::new(FlowMppi::new(c, flow()?)?)
            }
            ControllerKind::Nfmpc => {
                let mut c = NfmpcConfig::new(samples);
                c.temperature = h.temperature;
                c.step_size = h.mppi_step_size;
                c.latent_var = h.nfmpc_latent_var;
                c.shifted_sample = h.nfmpc_shifted_sample;
                c.seed = self.seed;
                Box::new(Nfmpc::new(c, flow()?, Arc::clone(&models.shift))?)
            }
        })
    }
}

struct Job {
    controller: ControllerKind,
    samples: usize,
    env_index: usize,
    seed: u64,
}

/// Runs every (controller, N, environment) episode of the configuration.
/// All controllers see the same environments and noise streams.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let models = Models::load(config)?;
    let tasks = config.tasks();
    let contexts: Vec<EnvContext> = config
        .env_seeds()
        .map(|s| tasks.context(s))
        .collect::<nfmpc::Result<_>>()?;
    let mut jobs = Vec::new();
    for &controller in &config.controllers {
        for &samples in &config.samples {
            for (env_index, seed) in config.env_seeds().enumerate() {
                jobs.push(Job {
                    controller,
                    samples,
                    env_index,
                    seed,
                });
            }
        }
    }
    let run = |job: &Job| -> Result<(EpisodeRecord, TimingRecord)> {
        let mut ctrl = config.controller(job.controller, job.samples, &models)?;
        let episode = EpisodeConfig {
            seed: job.seed,
            ..config.episode.clone()
        };
        let r = simulate(ctrl.as_mut(), &contexts[job.env_index], &episode)?;
        Ok((
            EpisodeRecord {
                controller: job.controller,
                samples: job.samples,
                env_index: job.env_index,
                seed: job.seed,
                outcome: r.outcome,
                cost: r.cost,
                steps: r.steps,
                trajectory: r.states.iter().map(|s| s.pos).collect(),
            },
            TimingRecord {
                controller: job.controller,
                samples: job.samples,
                env_index: job.env_index,
                steps: r.steps,
                timing: r.timing,
            },
        ))
    };
    let results: Vec<Result<(EpisodeRecord, TimingRecord)>> = if config.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let (records, timings): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let summary = aggregate(&records, &timings);
    Ok(Experiment {
        records,
        timings,
        summary,
    })
}
