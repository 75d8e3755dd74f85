//! Episodic training of the flow and shift model by backpropagation through
//! time, with the score-function approximation of the latent update
//! gradient.

mod gradient;
mod tape;
mod train;

pub use gradient::{
    accumulate_pull_vjps, approx_delta_mu_grad, approx_delta_mu_vjp, delta_mu_adjoints, loss_gradient, step_adjoints,
    step_loss, ApproxTerms, LatentMap, SampleAdjoint,
};
pub use tape::{backward_episode, run_episode, EpisodeTape, TapeGradient};
pub use train::{
    checkpoint_paths, episode_seed, median, validate, write_learning_curve, CurveRow, TrainConfig, TrainReport,
    Trainer, ValidationStats, VALIDATION_SEED_BASE,
};
