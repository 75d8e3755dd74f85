//! Planar navigation: a stochastic double integrator among disc obstacles.

mod cost;
mod dynamics;
mod generate;
mod simulate;
mod tasks;

use serde::{Deserialize, Serialize};

pub use cost::{bound_cost, sdf_query, stage_cost, terminal_cost, CostWeights, PlanarModel};
pub use dynamics::{double_integrator_step, DynamicsConfig, CONTROL_LIMIT};
pub use generate::{generate_env, obstacle_drift, EnvKind, EnvParams};
pub use simulate::{episode_outcome, rollout, simulate, EpisodeConfig, EpisodeResult, Outcome, PlanarEnv, Rollout};
pub use tasks::{PlanarTasks, TaskSource};

use crate::controller::RolloutModel;
use crate::error::{check_len, Error, Result};

/// A true system driven in closed loop by a controller.
pub trait Environment: Send {
    fn state(&self) -> Vec<f64>;

    /// Conditioning vector handed to the controller.
    fn context(&self) -> Vec<f64>;

    /// Prediction model for the current step.
    fn model(&self) -> &dyn RolloutModel;

    /// Applies an action and returns the incurred stage cost.
    fn step(&mut self, action: &[f64]) -> Result<f64>;

    /// The episode has terminated early.
    fn done(&self) -> bool;

    fn succeeded(&self) -> bool;
}

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;

/// Position and velocity of the point robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl PlanarState {
    pub fn at(pos: [f64; 2]) -> Self {
        Self { pos, vel: [0.0; 2] }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        check_len("planar state", STATE_DIM, x.len())?;
        Ok(Self {
            pos: [x[0], x[1]],
            vel: [x[2], x[3]],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(&self.vel).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapBounds {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl Default for MapBounds {
    fn default() -> Self {
        Self {
            lower: [-10.0; 2],
            upper: [10.0; 2],
        }
    }
}

impl MapBounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
    }

    pub fn clip(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.lower[0], self.upper[0]),
            p[1].clamp(self.lower[1], self.upper[1]),
        ]
    }

    /// Half of the larger side length, used to scale context features.
    pub fn scale(&self) -> f64 {
        0.5 * (self.upper[0] - self.lower[0]).max(self.upper[1] - self.lower[1])
    }
}

/// What the flow is conditioned on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// Unconditional flow.
    None,
    /// Start and goal positions.
    StartGoal,
    /// Start and goal positions plus obstacle centres.
    StartGoalObstacles,
    /// Current state, goal position and obstacle centres.
    #[default]
    StateGoalObstacles,
}

/// One navigation problem: obstacles, start, goal and map bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvContext {
    pub obstacles: Vec<Obstacle>,
    pub start: PlanarState,
    pub goal: [f64; 2],
    pub bounds: MapBounds,
    #[serde(default)]
    pub dynamic: bool,
    /// Standard deviation of the per-step obstacle drift.
    #[serde(default)]
    pub drift_scale: f64,
    /// Minimum distance kept between obstacle surfaces and the robot/goal.
    #[serde(default)]
    pub clearance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EnvContext {
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.contains(self.start.pos) || !self.bounds.contains(self.goal) {
            return Err(Error::Config("start and goal must lie inside the map".into()));
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0) || !self.bounds.contains(o.center) {
                return Err(Error::Config("obstacles need positive radii and centres inside the map".into()));
            }
        }
        Ok(())
    }

    pub fn context_dim(mode: ContextMode, n_obstacles: usize) -> usize {
        match mode {
            ContextMode::None => 0,
            ContextMode::StartGoal => 4,
            ContextMode::StartGoalObstacles => 4 + 2 * n_obstacles,
            ContextMode::StateGoalObstacles => 6 + 2 * n_obstacles,
        }
    }

    /// Flow conditioning vector, scaled to roughly unit range.
    pub fn features(&self, mode: ContextMode, state: &PlanarState) -> Vec<f64> {
        let s = 1.0 / self.bounds.scale();
        let mut out = Vec::with_capacity(Self::context_dim(mode, self.obstacles.len()));
        match mode {
            ContextMode::None => return out,
            ContextMode::StartGoal | ContextMode::StartGoalObstacles => {
                out.extend(self.start.pos.iter().map(|v| v * s));
            }
            ContextMode::StateGoalObstacles => {
                out.extend(state.pos.iter().chain(&state.vel).map(|v| v * s));
            }
        }
        out.extend(self.goal.iter().map(|v| v * s));
        if mode != ContextMode::StartGoal {
            for o in &self.obstacles {
                out.extend(o.center.iter().map(|v| v * s));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ctx: Self = serde_json::from_str(text)?;
        ctx.validate()?;
        Ok(ctx)
    }
}
