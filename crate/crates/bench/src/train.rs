use std::path::{Path, PathBuf};

use nfmpc::controller::ShiftConfig;
use nfmpc::envs::{EpisodeConfig, PlanarTasks, CONTROL_DIM};
use nfmpc::flow::{ControlBounds, FlowConfig};
use nfmpc::training::{checkpoint_paths, CurveRow, TrainConfig, TrainReport, Trainer};

use crate::config::ExperimentConfig;
use crate::error::Result;

impl ExperimentConfig {
    pub fn flow_config(&self) -> FlowConfig {
        let t = &self.training;
        let b = self.hyperparameters.action_bound;
        let mut flow = FlowConfig::new(CONTROL_DIM, self.horizon, self.context_dim());
        flow.blocks = t.blocks;
        flow.hidden_width = t.hidden_width;
        flow.bounds = Some(ControlBounds {
            lower: vec![-b; CONTROL_DIM],
            upper: vec![b; CONTROL_DIM],
        });
        flow
    }

    /// Training configuration; `seed` selects the initialization and the
    /// sequence of training environments.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        let h = &self.hyperparameters;
        let mut cfg = TrainConfig::new(self.flow_config(), t.episodes, self.episode.steps, t.samples);
        cfg.temperature = t.temperature;
        cfg.step_size = h.mppi_step_size;
        cfg.latent_var = h.nfmpc_latent_var;
        cfg.lr = t.lr;
        cfg.clip_norm = t.clip_norm;
        cfg.seed = seed;
        cfg.shift = ShiftConfig::learned(t.shift_kind, t.shift_hidden, t.shift_residual);
        cfg.shifted_sample = h.nfmpc_shifted_sample;
        cfg.validation_every = t.validation_every;
        cfg.validation_envs = t.validation_envs;
        cfg.validation_samples = t.validation_samples;
        cfg.validation_temperature = h.temperature;
        cfg.pretrain_envs = t.pretrain_envs;
        cfg.pretrain_samples = t.pretrain_samples;
        cfg.pretrain_std = t.pretrain_std;
        cfg.pretrain_temperature = t.pretrain_temperature;
        cfg.pretrain_lr = Some(t.pretrain_lr);
        cfg
    }

    /// Environment sources for training and validation episodes.
    pub fn training_tasks(&self) -> (PlanarTasks, PlanarTasks) {
        let validation = self.tasks();
        let train = PlanarTasks {
            episode: EpisodeConfig {
                stop_at_goal: !self.training.run_past_goal,
                ..self.episode.clone()
            },
            ..validation.clone()
        };
        (train, validation)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub flow: PathBuf,
    pub shift: PathBuf,
    pub curve: PathBuf,
}

/// Trains NFMPC and writes flow.ckpt, shift.ckpt and learning_curve.csv to
/// `out`.
pub fn train(config: &ExperimentConfig, seed: u64, out: &Path, observe: impl FnMut(&CurveRow)) -> Result<TrainOutcome> {
    let cfg = config.train_config(seed);
    let (train, validation) = config.training_tasks();
    let report = Trainer::new(cfg)?.run(&train, &validation, Some(out), observe)?;
    let (flow, shift, curve) = checkpoint_paths(out);
    Ok(TrainOutcome {
        report,
        flow,
        shift,
        curve,
    })
}
