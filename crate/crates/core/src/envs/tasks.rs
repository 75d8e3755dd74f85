use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cost::sdf_query;

use super::generate::{generate_env, EnvKind, EnvParams};
use super::simulate::{EpisodeConfig, PlanarEnv};
use super::{EnvContext, Environment, PlanarState};
use crate::error::Result;

/// A seeded distribution over environments.
pub trait TaskSource: Sync {
    fn environment(&self, seed: u64) -> Result<Box<dyn Environment>>;

    /// Environment used to fit the initial flow. Sources may start it from
    /// states other than the episode start to widen coverage.
    fn pretrain_environment(&self, seed: u64) -> Result<Box<dyn Environment>> {
        self.environment(seed)
    }

    /// Length of the conditioning vector the environments produce.
    fn context_dim(&self) -> usize;
}

/// Generated planar maps paired with an episode configuration. The map seed
/// also seeds the noise and drift streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarTasks {
    pub kind: EnvKind,
    pub params: EnvParams,
    pub episode: EpisodeConfig,
}

impl PlanarTasks {
    pub fn context(&self, seed: u64) -> Result<EnvContext> {
        generate_env(self.kind, seed, &self.params)
    }

    pub fn planar(&self, seed: u64) -> Result<PlanarEnv> {
        let ctx = self.context(seed)?;
        PlanarEnv::new(&ctx, &EpisodeConfig { seed, ..self.episode.clone() })
    }
}

impl TaskSource for PlanarTasks {
    fn environment(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(Box::new(self.planar(seed)?))
    }

    /// Half of the seeds keep the map's start; the rest place the robot at a
    /// random free position with a random velocity.
    fn pretrain_environment(&self, seed: u64) -> Result<Box<dyn Environment>> {
        let mut ctx = self.context(seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        if rng.random_bool(0.5) {
            let b = ctx.bounds;
            let vel = Normal::new(0.0, 2.0).expect("valid std");
            for _ in 0..1000 {
                let pos = [
                    rng.random_range(b.lower[0]..=b.upper[0]),
                    rng.random_range(b.lower[1]..=b.upper[1]),
                ];
                if sdf_query(&ctx, pos) > ctx.clearance.max(0.1) {
                    ctx.start = PlanarState {
                        pos,
                        vel: [vel.sample(&mut rng), vel.sample(&mut rng)],
                    };
                    break;
                }
            }
        }
        Ok(Box::new(PlanarEnv::new(&ctx, &EpisodeConfig { seed, ..self.episode.clone() })?))
    }

    fn context_dim(&self) -> usize {
        EnvContext::context_dim(self.episode.context_mode, self.params.obstacles)
    }
}
