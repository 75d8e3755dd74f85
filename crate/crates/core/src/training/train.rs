use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gradient::loss_gradient;
use super::tape::{backward_episode, run_episode, EpisodeTape};
use crate::controller::{
    evaluate_costs, softmax_weights, ActionMode, NfmpcConfig, SampleBatch, ShiftConfig,
    ShiftModel,
};
use crate::diffnet::{Adam, AdamConfig, GradientRecord};
use crate::envs::TaskSource;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowModel};

/// Offset of the held-out validation environment seeds.
pub const VALIDATION_SEED_BASE: u64 = 1 << 40;
const PRETRAIN_SEED_BASE: u64 = 1 << 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of training episodes D.
    pub episodes: usize,
    /// Episode length T.
    pub steps: usize,
    /// Samples per MPC step N.
    pub samples: usize,
    pub temperature: f64,
    pub step_size: f64,
    pub latent_var: f64,
    pub lr: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    pub seed: u64,
    pub flow: FlowConfig,
    #[serde(default)]
    pub shift: ShiftConfig,
    #[serde(default)]
    pub shifted_sample: bool,
    /// Validate every this many episodes (0 disables).
    pub validation_every: usize,
    pub validation_envs: usize,
    pub validation_samples: usize,
    pub validation_steps: usize,
    pub validation_temperature: f64,
    /// Environments used for the reward-weighted initialization of the flow
    /// before episodic training (0 disables).
    #[serde(default)]
    pub pretrain_envs: usize,
    #[serde(default = "default_pretrain_samples")]
    pub pretrain_samples: usize,
    /// Standard deviation of the pretraining proposal before the bound map.
    #[serde(default = "default_pretrain_std")]
    pub pretrain_std: f64,
    #[serde(default = "default_pretrain_temperature")]
    pub pretrain_temperature: f64,
    /// Learning rate of the initialization fit; `lr` when absent.
    #[serde(default)]
    pub pretrain_lr: Option<f64>,
}

fn default_pretrain_samples() -> usize {
    256
}

fn default_pretrain_std() -> f64 {
    2.0
}

fn default_pretrain_temperature() -> f64 {
    0.1
}

fn default_clip() -> f64 {
    10.0
}

impl TrainConfig {
    pub fn new(flow: FlowConfig, episodes: usize, steps: usize, samples: usize) -> Self {
        Self {
            episodes,
            steps,
            samples,
            temperature: 1e-32,
            step_size: 1.0,
            latent_var: 1.0,
            lr: 1e-4,
            clip_norm: default_clip(),
            seed: 0,
            flow,
            shift: ShiftConfig::default(),
            shifted_sample: false,
            validation_every: 100,
            validation_envs: 10,
            validation_samples: samples,
            validation_steps: steps,
            validation_temperature: 1e-32,
            pretrain_envs: 0,
            pretrain_samples: default_pretrain_samples(),
            pretrain_std: default_pretrain_std(),
            pretrain_temperature: default_pretrain_temperature(),
            pretrain_lr: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.validation_samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.flow.horizon == 0 || self.flow.control_dim == 0 {
            return Err(Error::Config("horizon and control dimension must be positive".into()));
        }
        if self.validation_every > 0 {
            if self.episodes % self.validation_every != 0 {
                return Err(Error::Config(format!(
                    "validation cadence {} does not divide {} episodes",
                    self.validation_every, self.episodes
                )));
            }
            if self.validation_envs == 0 {
                return Err(Error::Config("validation needs at least one environment".into()));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        if let Some(lr) = self.pretrain_lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("pretraining learning rate {lr} is invalid")));
            }
        }
        if self.pretrain_envs > 0 && !(self.pretrain_std > 0.0 && self.pretrain_temperature > 0.0) {
            return Err(Error::Config("pretraining spread and temperature must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }

    /// Controller settings used for training episodes.
    pub fn controller(&self, episode: u64) -> NfmpcConfig {
        NfmpcConfig {
            samples: self.samples,
            temperature: self.temperature,
            step_size: self.step_size,
            latent_var: self.latent_var,
            shifted_sample: self.shifted_sample,
            action: ActionMode::Deterministic,
            seed: episode,
        }
    }

    /// Controller settings used for validation episodes.
    pub fn validation_controller(&self) -> NfmpcConfig {
        NfmpcConfig {
            samples: self.validation_samples,
            temperature: self.validation_temperature,
            ..self.controller(0)
        }
    }
}

/// Seed of the environment used by training episode `d`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(episode as u64) & (VALIDATION_SEED_BASE - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub success_rate: f64,
    /// Median cost over successful episodes; NaN when none succeeded.
    pub median_cost: f64,
    pub mean_cost: f64,
    pub mean_loss: f64,
}

impl ValidationStats {
    /// Checkpoints with at least `floor` success and some successful episode
    /// rank by lower median successful cost, then higher success, then lower
    /// mean cost. Others rank below them by success, then median, then mean.
    pub fn better_than(&self, other: &ValidationStats, floor: f64) -> bool {
        let eligible = |s: &ValidationStats| s.success_rate >= floor && !s.median_cost.is_nan();
        match (eligible(self), eligible(other)) {
            (true, false) => return true,
            (false, true) => return false,
            (true, true) => {
                if self.median_cost != other.median_cost {
                    return self.median_cost < other.median_cost;
                }
                if self.success_rate != other.success_rate {
                    return self.success_rate > other.success_rate;
                }
                return self.mean_cost < other.mean_cost;
            }
            (false, false) => {}
        }
        if self.success_rate != other.success_rate {
            return self.success_rate > other.success_rate;
        }
        match (self.median_cost.is_nan(), other.median_cost.is_nan()) {
            (false, true) => return true,
            (true, false) => return false,
            (false, false) if self.median_cost != other.median_cost => return self.median_cost < other.median_cost,
            _ => {}
        }
        self.mean_cost < other.mean_cost
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs the deterministic controller on the held-out environments.
pub fn validate(
    flow: &Arc<FlowModel>,
    shift: &Arc<ShiftModel>,
    config: &TrainConfig,
    tasks: &dyn TaskSource,
) -> Result<ValidationStats> {
    let ctrl = config.validation_controller();
    let runs = (0..config.validation_envs)
        .into_par_iter()
        .map(|k| {
            let mut env = tasks.environment(VALIDATION_SEED_BASE + k as u64)?;
            let (tape, r) = run_episode(flow.clone(), shift.clone(), &ctrl, env.as_mut(), config.validation_steps)?;
            Ok((r.succeeded, r.cost, tape.total))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let mut ok: Vec<f64> = runs.iter().filter(|r| r.0).map(|r| r.1).collect();
    Ok(ValidationStats {
        success_rate: ok.len() as f64 / n,
        median_cost: median(&mut ok),
        mean_cost: runs.iter().map(|r| r.1).sum::<f64>() / n,
        mean_loss: runs.iter().map(|r| r.2).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub train_loss: f64,
    pub validation: Option<ValidationStats>,
    pub wall_clock_s: f64,
}

pub fn write_learning_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record(["episode", "train_loss", "val_success_rate", "val_median_cost", "wall_clock_s"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.train_loss.to_string(),
            opt(r.validation.map(|v| v.success_rate)),
            opt(r.validation.map(|v| v.median_cost)),
            format!("{:.3}", r.wall_clock_s),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub flow: FlowModel,
    pub shift: ShiftModel,
    pub curve: Vec<CurveRow>,
    /// Episode count at the retained checkpoint.
    pub best_episode: usize,
    pub best: Option<ValidationStats>,
    /// Validation of the parameters before the first episode.
    pub initial: Option<ValidationStats>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
}

/// Episodic training of a flow and shift model.
pub struct Trainer {
    config: TrainConfig,
    flow: FlowModel,
    shift: ShiftModel,
    flow_opt: Adam,
    shift_opt: Adam,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let flow = FlowModel::new(config.flow.clone(), config.seed)?;
        let shift = ShiftModel::new(config.shift.clone(), flow.dim(), config.seed.wrapping_add(1))?;
        Self::from_models(config, flow, shift)
    }

    pub fn from_models(config: TrainConfig, flow: FlowModel, shift: ShiftModel) -> Result<Self> {
        config.validate()?;
        if flow.dim() != shift.dim() {
            return Err(Error::Config("flow and shift widths differ".into()));
        }
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let flow_opt = Adam::new(adam, flow.num_params());
        let shift_opt = Adam::new(adam, shift.num_params());
        Ok(Self {
            config,
            flow,
            shift,
            flow_opt,
            shift_opt,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn flow(&self) -> &FlowModel {
        &self.flow
    }

    pub fn shift(&self) -> &ShiftModel {
        &self.shift
    }

    fn check_context(&self, tasks: &dyn TaskSource) -> Result<()> {
        if tasks.context_dim() != self.flow.context_dim() {
            return Err(Error::Config(format!(
                "tasks provide {} context features but the flow expects {}",
                tasks.context_dim(),
                self.flow.context_dim()
            )));
        }
        Ok(())
    }

    /// Clips the joint gradient to the configured norm and applies Adam.
    fn apply(&mut self, mut flow_grad: Vec<f64>, mut shift_grad: Vec<f64>) -> Result<()> {
        let norm = flow_grad.iter().chain(&shift_grad).map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient norm".into()));
        }
        if norm > self.config.clip_norm {
            let s = self.config.clip_norm / norm;
            flow_grad.iter_mut().chain(shift_grad.iter_mut()).for_each(|g| *g *= s);
        }
        let fg = GradientRecord::from_parts(self.flow.params().layout().clone(), flow_grad, None)?;
        self.flow_opt.step(self.flow.params_mut(), &fg)?;
        if self.shift.num_params() > 0 {
            let sg = GradientRecord::from_parts(self.shift.params().layout().clone(), shift_grad, None)?;
            self.shift_opt.step(self.shift.params_mut(), &sg)?;
        }
        Ok(())
    }

    /// Reward-weighted fit of the flow to a fixed broad proposal. Control
    /// sequences are drawn independently of the flow, scored from the
    /// pretraining state, and their weighted likelihood under the flow's
    /// initial distribution is raised. Returns the last weighted cost.
    pub fn pretrain(&mut self, tasks: &dyn TaskSource) -> Result<f64> {
        self.check_context(tasks)?;
        let d = self.flow.dim();
        let n = self.config.pretrain_samples.max(1);
        let zero = vec![0.0; d];
        let mut last = 0.0;
        let episodic = self.flow_opt.config;
        let lr = self.config.pretrain_lr.unwrap_or(self.config.lr);
        self.flow_opt = Adam::new(AdamConfig { lr, ..episodic }, self.flow.num_params());
        for k in 0..self.config.pretrain_envs {
            let seed = PRETRAIN_SEED_BASE + episode_seed(self.config.seed, k);
            let env = tasks.pretrain_environment(seed)?;
            let state = env.state();
            let context = env.context();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let controls = (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..d)
                        .map(|_| {
                            let v: f64 = StandardNormal.sample(&mut rng);
                            self.config.pretrain_std * v
                        })
                        .collect();
                    match self.flow.sigmoid() {
                        Some(layer) => layer.forward(&x).map(|e| e.output),
                        None => Ok(x),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let latents = controls
                .par_iter()
                .map(|u| self.flow.pull(u, &context).map(|e| e.output))
                .collect::<Result<Vec<_>>>()?;
            let costs = evaluate_costs(env.model(), &state, &controls);
            let weights = softmax_weights(&costs, self.config.pretrain_temperature)?;
            let batch = SampleBatch {
                latents,
                controls,
                costs,
                weights,
            };
            let (grad, _) = loss_gradient(&self.flow, &batch, &zero, self.config.latent_var, &context)?;
            last = batch.weights.iter().zip(&batch.costs).map(|(w, c)| w * c).sum();
            self.apply(grad, vec![0.0; self.shift.num_params()])?;
        }
        self.flow_opt = Adam::new(episodic, self.flow.num_params());
        Ok(last)
    }

    /// One training episode: forward tape, backward pass and Adam update.
    pub fn train_episode(&mut self, tasks: &dyn TaskSource, episode: usize) -> Result<EpisodeTape> {
        let mut env = tasks.environment(episode_seed(self.config.seed, episode))?;
        let flow = Arc::new(self.flow.clone());
        let shift = Arc::new(self.shift.clone());
        let ctrl = self.config.controller(episode as u64);
        let (tape, _) = run_episode(flow.clone(), shift.clone(), &ctrl, env.as_mut(), self.config.steps)?;
        if !tape.total.is_finite() {
            return Err(Error::NonFinite(format!("loss of episode {episode}")));
        }
        let g = backward_episode(&tape, flow.as_ref(), &shift)?;
        self.apply(g.flow, g.shift)?;
        Ok(tape)
    }

    /// Runs the configured number of episodes. When `out` is given, the
    /// retained checkpoint and the learning curve are written there.
    pub fn run(
        mut self,
        train: &dyn TaskSource,
        validation: &dyn TaskSource,
        out: Option<&Path>,
        mut observe: impl FnMut(&CurveRow),
    ) -> Result<TrainReport> {
        self.check_context(train)?;
        self.check_context(validation)?;
        let start = Instant::now();
        if self.config.pretrain_envs > 0 {
            self.pretrain(train)?;
        }
        let mut curve = Vec::with_capacity(self.config.episodes);
        let mut best: Option<(ValidationStats, FlowModel, ShiftModel, usize)> = None;
        let mut diverged = None;
        let mut initial = None;
        let mut floor = 0.0;
        if self.config.validation_every > 0 {
            let stats = validate(&Arc::new(self.flow.clone()), &Arc::new(self.shift.clone()), &self.config, validation)?;
            initial = Some(stats);
            floor = stats.success_rate;
            best = Some((stats, self.flow.clone(), self.shift.clone(), 0));
        }
        for d in 0..self.config.episodes {
            let good = (self.flow.clone(), self.shift.clone());
            let tape = match self.train_episode(train, d) {
                Ok(t) => t,
                Err(Error::NonFinite(msg)) => {
                    (self.flow, self.shift) = good;
                    diverged = Some(format!("episode {d}: {msg}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let mut row = CurveRow {
                episode: d + 1,
                train_loss: tape.total,
                validation: None,
                wall_clock_s: start.elapsed().as_secs_f64(),
            };
            if self.config.validation_every > 0 && (d + 1) % self.config.validation_every == 0 {
                let stats = validate(&Arc::new(self.flow.clone()), &Arc::new(self.shift.clone()), &self.config, validation)?;
                row.validation = Some(stats);
                row.wall_clock_s = start.elapsed().as_secs_f64();
                if best.as_ref().is_none_or(|b| stats.better_than(&b.0, floor)) {
                    best = Some((stats, self.flow.clone(), self.shift.clone(), d + 1));
                }
            }
            observe(&row);
            curve.push(row);
        }
        let report = match best {
            Some((stats, flow, shift, episode)) => TrainReport {
                flow,
                shift,
                curve,
                best_episode: episode,
                best: Some(stats),
                initial,
                diverged,
            },
            None => TrainReport {
                best_episode: curve.len(),
                flow: self.flow,
                shift: self.shift,
                curve,
                best: None,
                initial,
                diverged,
            },
        };
        if let Some(dir) = out {
            write_outputs(dir, &report)?;
        }
        Ok(report)
    }
}

/// Paths of the files written by a training run.
pub fn checkpoint_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join("flow.ckpt"), dir.join("shift.ckpt"), dir.join("learning_curve.csv"))
}

fn write_outputs(dir: &Path, report: &TrainReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (flow, shift, curve) = checkpoint_paths(dir);
    report.flow.save(&flow)?;
    report.shift.save(&shift)?;
    write_learning_curve(&curve, &report.curve)
}
