//! Model predictive path integral control with a learned normalizing-flow
//! sampling distribution whose online updates run in the flow's latent
//! space.

pub mod controller;
pub mod diffnet;
pub mod envs;
pub mod flow;
pub mod training;
mod error;

pub use error::{Error, Result};
