//! Conditional RealNVP normalizing flow with an optional box-constraining
//! sigmoid output layer.

mod coupling;
mod model;
mod sigmoid;

pub use coupling::CouplingBlock;
pub use model::{ControlBounds, FlowConfig, FlowModel};
pub use sigmoid::{BoundsMode, SigmoidLayer, TOLERANT_MARGIN};

use crate::controller::LatentGaussian;
use crate::error::Result;

/// Output of a flow map together with `log |det ∂out/∂in|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEval {
    pub output: Vec<f64>,
    pub log_det: f64,
}

pub fn coupling_forward(block: &CouplingBlock, params: &[f64], y: &[f64], context: &[f64]) -> Result<FlowEval> {
    block.forward(params, y, context)
}

pub fn coupling_inverse(block: &CouplingBlock, params: &[f64], y: &[f64], context: &[f64]) -> Result<FlowEval> {
    block.inverse(params, y, context)
}

pub fn sigmoid_forward(layer: &SigmoidLayer, x: &[f64]) -> Result<FlowEval> {
    layer.forward(x)
}

pub fn sigmoid_inverse(layer: &SigmoidLayer, u: &[f64]) -> Result<FlowEval> {
    layer.inverse(u, BoundsMode::Strict)
}

pub fn flow_push(model: &FlowModel, z: &[f64], context: &[f64]) -> Result<FlowEval> {
    model.push(z, context)
}

pub fn flow_pull(model: &FlowModel, u: &[f64], context: &[f64]) -> Result<FlowEval> {
    model.pull(u, context)
}

pub fn log_likelihood(model: &FlowModel, latent: &LatentGaussian, u: &[f64], context: &[f64]) -> Result<f64> {
    model.log_likelihood(latent, u, context)
}
