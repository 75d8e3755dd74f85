use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cost::sdf_query;
use super::{EnvContext, MapBounds, Obstacle, PlanarState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    /// Obstacles on a fixed grid.
    Grid,
    /// Obstacles placed uniformly at random.
    Random,
    /// Random placement with obstacles drifting every step.
    RandomDynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    #[serde(default = "default_obstacles")]
    pub obstacles: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub bounds: MapBounds,
    /// Free space kept around start and goal, measured from obstacle surfaces.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    #[serde(default = "default_drift")]
    pub drift_scale: f64,
}

fn default_obstacles() -> usize {
    8
}
fn default_radius() -> f64 {
    0.8
}
fn default_clearance() -> f64 {
    1.0
}
fn default_drift() -> f64 {
    0.1
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            obstacles: default_obstacles(),
            radius: default_radius(),
            bounds: MapBounds::default(),
            clearance: default_clearance(),
            drift_scale: default_drift(),
        }
    }
}

const MAX_TRIES: usize = 10_000;

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Start within 5–15% of the map width, goal in the mirrored band on
/// the right, obstacles in the middle three fifths.
struct Regions {
    start_x: (f64, f64),
    goal_x: (f64, f64),
    obstacle_x: (f64, f64),
    y: (f64, f64),
}

impl Regions {
    fn new(b: &MapBounds) -> Self {
        let (lo, hi) = (b.lower[0], b.upper[0]);
        Self {
            start_x: (lerp(lo, hi, 0.05), lerp(lo, hi, 0.15)),
            goal_x: (lerp(lo, hi, 0.85), lerp(lo, hi, 0.95)),
            obstacle_x: (lerp(lo, hi, 0.25), lerp(lo, hi, 0.75)),
            y: (lerp(b.lower[1], b.upper[1], 0.1), lerp(b.lower[1], b.upper[1], 0.9)),
        }
    }
}

fn grid_obstacles(params: &EnvParams, r: &Regions) -> Vec<Obstacle> {
    let n = params.obstacles;
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (i, j) = (k / cols, k % cols);
        let tx = (j as f64 + 0.5) / cols as f64;
        let ty = (i as f64 + 0.5) / rows as f64;
        out.push(Obstacle {
            center: [lerp(r.obstacle_x.0, r.obstacle_x.1, tx), lerp(r.y.0, r.y.1, ty)],
            radius: params.radius,
        });
    }
    out
}

fn sample_point(rng: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> [f64; 2] {
    [rng.random_range(x.0..=x.1), rng.random_range(y.0..=y.1)]
}

/// Builds a navigation problem. All randomness derives from `seed`.
pub fn generate_env(kind: EnvKind, seed: u64, params: &EnvParams) -> Result<EnvContext> {
    if !(params.radius > 0.0) || params.clearance < 0.0 {
        return Err(Error::Config("obstacle radius must be positive and clearance nonnegative".into()));
    }
    let b = params.bounds;
    if !(b.lower[0] < b.upper[0] && b.lower[1] < b.upper[1]) {
        return Err(Error::Config("empty map bounds".into()));
    }
    let regions = Regions::new(&b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = EnvContext {
        obstacles: Vec::new(),
        start: PlanarState::default(),
        goal: [0.0; 2],
        bounds: b,
        dynamic: kind == EnvKind::RandomDynamic,
        drift_scale: if kind == EnvKind::RandomDynamic { params.drift_scale } else { 0.0 },
        clearance: params.clearance,
        seed,
    };
    let start = sample_point(&mut rng, regions.start_x, regions.y);
    let goal = sample_point(&mut rng, regions.goal_x, regions.y);
    ctx.start = PlanarState::at(start);
    ctx.goal = goal;
    let keep = params.clearance + params.radius;
    match kind {
        EnvKind::Grid => {
            ctx.obstacles = grid_obstacles(params, &regions);
            // keep the fixed grid and move start/goal until both are clear
            let mut tries = 0;
            while sdf_query(&ctx, ctx.start.pos) < params.clearance || sdf_query(&ctx, ctx.goal) < params.clearance {
                tries += 1;
                if tries > MAX_TRIES {
                    return Err(Error::Generation(format!("no clear start/goal for the grid layout (seed {seed})")));
                }
                ctx.start = PlanarState::at(sample_point(&mut rng, regions.start_x, regions.y));
                ctx.goal = sample_point(&mut rng, regions.goal_x, regions.y);
            }
        }
        EnvKind::Random | EnvKind::RandomDynamic => {
            for _ in 0..params.obstacles {
                let mut tries = 0;
                let center = loop {
                    tries += 1;
                    if tries > MAX_TRIES {
                        return Err(Error::Generation(format!("could not place obstacle (seed {seed})")));
                    }
                    let c = sample_point(&mut rng, regions.obstacle_x, regions.y);
                    if dist(c, start) >= keep && dist(c, goal) >= keep {
                        break c;
                    }
                };
                ctx.obstacles.push(Obstacle {
                    center,
                    radius: params.radius,
                });
            }
        }
    }
    Ok(ctx)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Gaussian random walk of every obstacle centre, clipped to the map. A step
/// that would bring an obstacle within the clearance of the robot or goal is
/// skipped for that obstacle.
pub fn obstacle_drift<R: Rng + ?Sized>(context: &EnvContext, robot: [f64; 2], rng: &mut R) -> EnvContext {
    let mut next = context.clone();
    if !(context.drift_scale > 0.0) {
        return next;
    }
    let n = Normal::new(0.0, context.drift_scale).expect("positive drift");
    for o in &mut next.obstacles {
        let step = [n.sample(rng), n.sample(rng)];
        let moved = context.bounds.clip([o.center[0] + step[0], o.center[1] + step[1]]);
        let keep = o.radius + context.clearance;
        if dist(moved, robot) >= keep && dist(moved, context.goal) >= keep {
            o.center = moved;
        }
    }
    next
}
