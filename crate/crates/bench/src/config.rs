use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nfmpc::controller::ShiftKind;
use nfmpc::envs::{ContextMode, EnvContext, EnvKind, EnvParams, EpisodeConfig, CONTROL_LIMIT};
use nfmpc::training::VALIDATION_SEED_BASE;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mppi,
    Flowmppi,
    Nfmpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Mppi, ControllerKind::Flowmppi, ControllerKind::Nfmpc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Mppi => "mppi",
            ControllerKind::Flowmppi => "flowmppi",
            ControllerKind::Nfmpc => "nfmpc",
        }
    }

    pub fn needs_flow(self) -> bool {
        self != ControllerKind::Mppi
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::Config(format!("unknown controller {s:?} (expected mppi, flowmppi or nfmpc)")))
    }
}

/// Task presets; each fixes the environment family and the tuned
/// controller values for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PnGrid,
    PnRand,
    PnRandDyn,
    /// Reduced random-obstacle task small enough to train on a laptop.
    Desk,
}

impl FromStr for Task {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| BenchError::Config(format!("unknown task {s:?} (expected pn-grid, pn-rand, pn-rand-dyn or desk)")))
    }
}

/// Controller hyperparameters shared by every run of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub temperature: f64,
    pub mppi_covariance: f64,
    pub mppi_step_size: f64,
    /// Covariance adaptation rate (0 keeps the initial covariance).
    pub mppi_covariance_step: f64,
    pub mppi_spline_knots: Option<usize>,
    pub flowmppi_covariance: f64,
    pub flowmppi_latent_var: f64,
    pub flowmppi_penalty: f64,
    pub nfmpc_latent_var: f64,
    pub nfmpc_shifted_sample: bool,
    /// Per-axis magnitude limit of sampled Gaussian controls.
    pub action_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoints {
    pub flow: Option<PathBuf>,
    pub shift: Option<PathBuf>,
    /// Evaluate NFMPC with the identity shift instead of the learned one.
    pub disable_shift: bool,
}

/// Settings of the `train` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub episodes: usize,
    pub samples: usize,
    pub temperature: f64,
    pub lr: f64,
    pub clip_norm: f64,
    pub blocks: usize,
    pub hidden_width: usize,
    pub shift_kind: ShiftKind,
    pub shift_hidden: usize,
    pub shift_residual: bool,
    pub validation_every: usize,
    pub validation_envs: usize,
    pub validation_samples: usize,
    /// Fits of the initial flow to the fixed proposal before BPTT.
    pub pretrain_envs: usize,
    pub pretrain_samples: usize,
    pub pretrain_std: f64,
    pub pretrain_temperature: f64,
    pub pretrain_lr: f64,
    /// Keep training episodes running after the goal is reached.
    pub run_past_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub controllers: Vec<ControllerKind>,
    pub env: EnvKind,
    pub env_params: EnvParams,
    pub episode: EpisodeConfig,
    pub horizon: usize,
    pub samples: Vec<usize>,
    /// Evaluation environments per (controller, N).
    pub episodes: usize,
    /// Halton offset and action-noise seed of every controller.
    pub seed: u64,
    /// First seed of the fixed evaluation environment set.
    pub env_seed: u64,
    pub hyperparameters: Hyperparameters,
    pub checkpoints: Checkpoints,
    pub training: TrainingSettings,
    pub output_dir: PathBuf,
    /// Run episodes concurrently; disable for clean timings.
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn preset(task: Task) -> Self {
        let (env, obstacles, horizon, steps, context_mode) = match task {
            Task::PnGrid => (EnvKind::Grid, 8, 32, 200, ContextMode::StartGoal),
            Task::PnRand => (EnvKind::Random, 8, 64, 200, ContextMode::StartGoalObstacles),
            Task::PnRandDyn => (EnvKind::RandomDynamic, 8, 64, 200, ContextMode::StateGoalObstacles),
            Task::Desk => (EnvKind::Random, 4, 16, 100, ContextMode::StateGoalObstacles),
        };
        let hyperparameters = match task {
            Task::PnGrid => Hyperparameters {
                temperature: 1e-32,
                mppi_covariance: 10.0,
                mppi_step_size: 0.7,
                mppi_covariance_step: 0.0,
                mppi_spline_knots: None,
                flowmppi_covariance: 10.0,
                flowmppi_latent_var: 1.0,
                flowmppi_penalty: 1e-4,
                nfmpc_latent_var: 1.0,
                nfmpc_shifted_sample: true,
                action_bound: CONTROL_LIMIT,
            },
            _ => Hyperparameters {
                temperature: 1e-32,
                mppi_covariance: 100.0,
                mppi_step_size: 1.0,
                mppi_covariance_step: 0.0,
                mppi_spline_knots: None,
                flowmppi_covariance: 10.0,
                flowmppi_latent_var: 1.0,
                flowmppi_penalty: 1e-3,
                nfmpc_latent_var: 1.0,
                nfmpc_shifted_sample: true,
                action_bound: CONTROL_LIMIT,
            },
        };
        let training = match task {
            Task::Desk => TrainingSettings {
                episodes: 200,
                samples: 64,
                temperature: 0.1,
                lr: 3e-5,
                clip_norm: 10.0,
                blocks: 5,
                hidden_width: 64,
                shift_kind: ShiftKind::Mlp,
                shift_hidden: 64,
                shift_residual: false,
                validation_every: 50,
                validation_envs: 16,
                validation_samples: 32,
                pretrain_envs: 1000,
                pretrain_samples: 256,
                pretrain_std: 2.0,
                pretrain_temperature: 0.03,
                pretrain_lr: 1e-4,
                run_past_goal: true,
            },
            _ => TrainingSettings {
                episodes: 2000,
                samples: 256,
                temperature: 0.1,
                lr: 1e-4,
                clip_norm: 10.0,
                blocks: 5,
                hidden_width: 128,
                shift_kind: if task == Task::PnGrid { ShiftKind::Mlp } else { ShiftKind::Lstm },
                shift_hidden: 128,
                shift_residual: false,
                validation_every: 100,
                validation_envs: 10,
                validation_samples: 256,
                pretrain_envs: 2000,
                pretrain_samples: 1024,
                pretrain_std: 2.0,
                pretrain_temperature: 0.03,
                pretrain_lr: 1e-4,
                run_past_goal: true,
            },
        };
        let samples = match task {
            Task::Desk => vec![32],
            _ => vec![32, 64, 128, 256, 512, 1024],
        };
        let episodes = if task == Task::Desk { 16 } else { 32 };
        Self {
            task,
            controllers: ControllerKind::ALL.to_vec(),
            env,
            env_params: EnvParams {
                obstacles,
                ..EnvParams::default()
            },
            episode: EpisodeConfig {
                steps,
                context_mode,
                ..EpisodeConfig::default()
            },
            horizon,
            samples,
            episodes,
            seed: 0,
            env_seed: VALIDATION_SEED_BASE,
            hyperparameters,
            checkpoints: Checkpoints::default(),
            training,
            output_dir: PathBuf::from("results"),
            parallel: true,
        }
    }

    /// Parses a JSON document; keys it leaves out take the preset values of
    /// its `task` (default `pn-rand-dyn`).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| BenchError::Config(format!("invalid JSON: {e}")))?;
        if !doc.is_object() {
            return Err(BenchError::Config("configuration must be a JSON object".into()));
        }
        let task = match doc.get("task") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| BenchError::Config(format!("task: {e}")))?,
            None => Task::PnRandDyn,
        };
        let mut merged = serde_json::to_value(Self::preset(task)).expect("presets serialize");
        merge(&mut merged, doc);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn context_dim(&self) -> usize {
        EnvContext::context_dim(self.episode.context_mode, self.env_params.obstacles)
    }

    /// Checks everything that can be checked before an episode runs,
    /// including that referenced checkpoints exist.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(BenchError::Config("the sample-count list is empty".into()));
        }
        if self.samples.contains(&0) {
            return Err(BenchError::Config("sample counts must be positive".into()));
        }
        if self.controllers.is_empty() {
            return Err(BenchError::Config("no controllers selected".into()));
        }
        if self.horizon == 0 {
            return Err(BenchError::Config("horizon must be positive".into()));
        }
        let h = &self.hyperparameters;
        if !(h.action_bound > 0.0) {
            return Err(BenchError::Config("action_bound must be positive".into()));
        }
        if self.controllers.contains(&ControllerKind::Flowmppi) && self.samples.iter().any(|n| n % 2 != 0) {
            return Err(BenchError::Config("FlowMPPI needs even sample counts".into()));
        }
        if self.controllers.iter().any(|c| c.needs_flow()) {
            match &self.checkpoints.flow {
                None => {
                    return Err(BenchError::Config(
                        "flowmppi and nfmpc need checkpoints.flow; train one first or pass --controller mppi".into(),
                    ))
                }
                Some(p) if !p.is_file() => {
                    return Err(BenchError::Config(format!("flow checkpoint {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        if let Some(p) = &self.checkpoints.shift {
            if self.controllers.contains(&ControllerKind::Nfmpc) && !p.is_file() {
                return Err(BenchError::Config(format!("shift checkpoint {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
