use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{sdf_query, stage_cost, CostWeights, PlanarModel};
use super::dynamics::double_integrator_step;
use super::generate::obstacle_drift;
use super::{ContextMode, EnvContext, Environment, PlanarState};
use crate::controller::{Controller, PhaseTiming, RolloutModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

/// Collision if any state is inside an obstacle, otherwise success if the
/// goal tolerance is reached, otherwise timeout.
pub fn episode_outcome(trajectory: &[PlanarState], context: &EnvContext, tolerance: f64) -> Outcome {
    if trajectory.iter().any(|s| sdf_query(context, s.pos) < 0.0) {
        return Outcome::Collision;
    }
    if trajectory.iter().any(|s| reached(s, context, tolerance)) {
        Outcome::Success
    } else {
        Outcome::Timeout
    }
}

fn reached(s: &PlanarState, context: &EnvContext, tolerance: f64) -> bool {
    (s.pos[0] - context.goal[0]).hypot(s.pos[1] - context.goal[1]) <= tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub steps: usize,
    pub dt: f64,
    /// Standard deviation of the true-system control noise.
    pub noise: f64,
    pub goal_tolerance: f64,
    /// End the episode once the goal is reached.
    pub stop_at_goal: bool,
    /// Warm-start iterations before the first step (0 disables).
    pub warm_start: usize,
    pub context_mode: ContextMode,
    pub weights: CostWeights,
    /// Seed of the noise and drift streams.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            dt: 0.1,
            noise: 1.0,
            goal_tolerance: 0.5,
            stop_at_goal: true,
            warm_start: 0,
            context_mode: ContextMode::default(),
            weights: CostWeights::default(),
            seed: 0,
        }
    }
}

/// The true planar system: noisy dynamics, drifting obstacles, collision
/// and goal bookkeeping.
#[derive(Debug, Clone)]
pub struct PlanarEnv {
    model: PlanarModel,
    config: EpisodeConfig,
    state: PlanarState,
    noise_rng: ChaCha8Rng,
    drift_rng: ChaCha8Rng,
    collided: bool,
    reached: bool,
    states: Vec<PlanarState>,
}

impl PlanarEnv {
    pub fn new(context: &EnvContext, config: &EpisodeConfig) -> Result<Self> {
        context.validate()?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
        noise_rng.set_stream(1);
        let mut drift_rng = ChaCha8Rng::seed_from_u64(config.seed);
        drift_rng.set_stream(2);
        let state = context.start;
        Ok(Self {
            model: PlanarModel::new(context.clone(), config.weights, config.dt),
            config: config.clone(),
            state,
            noise_rng,
            drift_rng,
            collided: sdf_query(context, state.pos) < 0.0,
            reached: reached(&state, context, config.goal_tolerance),
            states: vec![state],
        })
    }

    pub fn planar_state(&self) -> PlanarState {
        self.state
    }

    pub fn env_context(&self) -> &EnvContext {
        &self.model.context
    }

    pub fn states(&self) -> &[PlanarState] {
        &self.states
    }

    pub fn outcome(&self) -> Outcome {
        if self.collided {
            Outcome::Collision
        } else if self.reached {
            Outcome::Success
        } else {
            Outcome::Timeout
        }
    }
}

impl Environment for PlanarEnv {
    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn context(&self) -> Vec<f64> {
        self.model.context.features(self.config.context_mode, &self.state)
    }

    fn model(&self) -> &dyn RolloutModel {
        &self.model
    }

    fn step(&mut self, action: &[f64]) -> Result<f64> {
        let cost = stage_cost(&self.state, action, &self.model.context, &self.model.weights);
        self.state = double_integrator_step(&self.state, action, self.config.dt, self.config.noise, &mut self.noise_rng);
        if !self.state.is_finite() {
            return Err(Error::NonFinite(format!("true state at step {}", self.states.len() - 1)));
        }
        if self.model.context.dynamic {
            self.model.context = obstacle_drift(&self.model.context, self.state.pos, &mut self.drift_rng);
        }
        self.states.push(self.state);
        self.collided |= sdf_query(&self.model.context, self.state.pos) < 0.0;
        self.reached |= reached(&self.state, &self.model.context, self.config.goal_tolerance);
        Ok(cost)
    }

    fn done(&self) -> bool {
        self.collided || (self.config.stop_at_goal && self.reached)
    }

    fn succeeded(&self) -> bool {
        self.reached && !self.collided
    }
}

/// Result of a closed-loop run on any [`Environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Sum of stage costs along the executed trajectory.
    pub cost: f64,
    pub actions: Vec<Vec<f64>>,
    pub timing: PhaseTiming,
    pub steps: usize,
    pub succeeded: bool,
}

/// Resets `controller`, optionally warm-starts it, then alternates
/// controller steps and environment steps until `steps` or termination.
pub fn rollout(
    controller: &mut dyn Controller,
    env: &mut dyn Environment,
    steps: usize,
    warm_start: usize,
) -> Result<Rollout> {
    let state = env.state();
    let features = env.context();
    controller.reset(&state, &features)?;
    if warm_start > 0 {
        controller.warm_start(&state, env.model(), &features, warm_start)?;
    }
    let mut out = Rollout {
        cost: 0.0,
        actions: Vec::with_capacity(steps),
        timing: PhaseTiming::default(),
        steps: 0,
        succeeded: false,
    };
    while out.steps < steps && !env.done() {
        let state = env.state();
        let features = env.context();
        let step = controller.step(&state, env.model(), &features)?;
        out.timing.add(&step.timing);
        out.cost += env.step(&step.action)?;
        out.actions.push(step.action);
        out.steps += 1;
    }
    out.succeeded = env.succeeded();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    /// Sum of stage costs along the executed trajectory.
    pub cost: f64,
    pub states: Vec<PlanarState>,
    pub actions: Vec<[f64; 2]>,
    pub timing: PhaseTiming,
    pub steps: usize,
}

/// Runs one closed-loop planar episode.
pub fn simulate(controller: &mut dyn Controller, context: &EnvContext, cfg: &EpisodeConfig) -> Result<EpisodeResult> {
    let mut env = PlanarEnv::new(context, cfg)?;
    let r = rollout(controller, &mut env, cfg.steps, cfg.warm_start)?;
    Ok(EpisodeResult {
        outcome: env.outcome(),
        cost: r.cost,
        states: env.states().to_vec(),
        actions: r.actions.iter().map(|a| [a[0], a[1]]).collect(),
        timing: r.timing,
        steps: r.steps,
    })
}
