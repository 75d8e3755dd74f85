use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PlanarState;

/// Acceleration limit applied per axis before integration.
pub const CONTROL_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub dt: f64,
    /// Standard deviation of the additive control noise.
    pub noise: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { dt: 0.1, noise: 1.0 }
    }
}

/// `p ← p + Δt·v`, `v ← v + Δt·(clamp(u) + w)` with `w ~ N(0, σ²I)`.
pub fn double_integrator_step<R: Rng + ?Sized>(
    state: &PlanarState,
    control: &[f64],
    dt: f64,
    sigma: f64,
    rng: &mut R,
) -> PlanarState {
    let mut acc = [0.0; 2];
    for (a, u) in acc.iter_mut().zip(control) {
        *a = u.clamp(-CONTROL_LIMIT, CONTROL_LIMIT);
    }
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("positive noise");
        for a in &mut acc {
            *a += n.sample(rng);
        }
    }
    PlanarState {
        pos: [state.pos[0] + dt * state.vel[0], state.pos[1] + dt * state.vel[1]],
        vel: [state.vel[0] + dt * acc[0], state.vel[1] + dt * acc[1]],
    }
}

/// Noise-free step used by the prediction model.
pub(crate) fn nominal_step(state: &PlanarState, control: &[f64], dt: f64) -> PlanarState {
    let a = [
        control[0].clamp(-CONTROL_LIMIT, CONTROL_LIMIT),
        control[1].clamp(-CONTROL_LIMIT, CONTROL_LIMIT),
    ];
    PlanarState {
        pos: [state.pos[0] + dt * state.vel[0], state.pos[1] + dt * state.vel[1]],
        vel: [state.vel[0] + dt * a[0], state.vel[1] + dt * a[1]],
    }
}
