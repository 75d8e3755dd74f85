use serde::{Deserialize, Serialize};

use super::dynamics::nominal_step;
use super::{EnvContext, MapBounds, PlanarState, CONTROL_DIM};
use crate::controller::RolloutModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_goal: f64,
    pub w_bound: f64,
    pub w_coll: f64,
    pub w_ctrl: f64,
    /// Add the goal term at the final predicted state.
    #[serde(default = "default_true")]
    pub terminal: bool,
    /// Signed distance below which the collision penalty activates.
    #[serde(default)]
    pub margin: f64,
}

fn default_true() -> bool {
    true
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_goal: 1.0,
            w_bound: 100.0,
            w_coll: 1000.0,
            w_ctrl: 1e-4,
            terminal: true,
            margin: 0.0,
        }
    }
}

/// `min_i (‖p − c_i‖ − r_i)`; `+∞` without obstacles.
pub fn sdf_query(context: &EnvContext, point: [f64; 2]) -> f64 {
    context
        .obstacles
        .iter()
        .map(|o| (point[0] - o.center[0]).hypot(point[1] - o.center[1]) - o.radius)
        .fold(f64::INFINITY, f64::min)
}

/// Per axis: squared distance to the nearer bound when outside the map.
pub fn bound_cost(state: &PlanarState, bounds: &MapBounds) -> f64 {
    (0..2)
        .map(|i| {
            let p = state.pos[i];
            if p > bounds.upper[i] || p < bounds.lower[i] {
                (p - bounds.upper[i]).powi(2).min((p - bounds.lower[i]).powi(2))
            } else {
                0.0
            }
        })
        .sum()
}

fn goal_term(state: &PlanarState, context: &EnvContext) -> f64 {
    let dx = state.pos[0] - context.goal[0];
    let dy = state.pos[1] - context.goal[1];
    dx * dx + dy * dy + state.vel[0] * state.vel[0] + state.vel[1] * state.vel[1]
}

pub fn stage_cost(state: &PlanarState, control: &[f64], context: &EnvContext, weights: &CostWeights) -> f64 {
    let mut c = 0.0;
    if weights.w_goal != 0.0 {
        c += weights.w_goal * goal_term(state, context);
    }
    if weights.w_bound != 0.0 {
        c += weights.w_bound * bound_cost(state, &context.bounds);
    }
    if weights.w_coll != 0.0 {
        c += weights.w_coll * (weights.margin - sdf_query(context, state.pos)).max(0.0);
    }
    if weights.w_ctrl != 0.0 {
        c += weights.w_ctrl * control.iter().map(|u| u * u).sum::<f64>();
    }
    c
}

pub fn terminal_cost(state: &PlanarState, context: &EnvContext, weights: &CostWeights) -> f64 {
    if weights.terminal {
        weights.w_goal * goal_term(state, context)
    } else {
        0.0
    }
}

/// Noise-free prediction model scoring control sequences in a fixed context.
#[derive(Debug, Clone)]
pub struct PlanarModel {
    pub context: EnvContext,
    pub weights: CostWeights,
    pub dt: f64,
}

impl PlanarModel {
    pub fn new(context: EnvContext, weights: CostWeights, dt: f64) -> Self {
        Self { context, weights, dt }
    }

    /// States visited by the nominal dynamics, starting with `state`.
    pub fn predict(&self, state: &PlanarState, controls: &[f64]) -> Vec<PlanarState> {
        let mut out = Vec::with_capacity(controls.len() / CONTROL_DIM + 1);
        let mut x = *state;
        out.push(x);
        for u in controls.chunks_exact(CONTROL_DIM) {
            x = nominal_step(&x, u, self.dt);
            out.push(x);
        }
        out
    }
}

impl RolloutModel for PlanarModel {
    fn control_dim(&self) -> usize {
        CONTROL_DIM
    }

    fn trajectory_cost(&self, state: &[f64], controls: &[f64]) -> f64 {
        let Ok(mut x) = PlanarState::from_slice(state) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        for u in controls.chunks_exact(CONTROL_DIM) {
            total += stage_cost(&x, u, &self.context, &self.weights);
            x = nominal_step(&x, u, self.dt);
        }
        total + terminal_cost(&x, &self.context, &self.weights)
    }
}
