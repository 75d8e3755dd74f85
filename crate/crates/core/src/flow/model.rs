use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coupling::CouplingBlock;
use super::sigmoid::{BoundsMode, SigmoidLayer};
use super::FlowEval;
use crate::controller::LatentGaussian;
use crate::diffnet::{load_params, save_params, GradientRecord, LayoutBuilder, ParamVector};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub control_dim: usize,
    pub horizon: usize,
    #[serde(default)]
    pub context_dim: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_true")]
    pub layer_norm: bool,
    /// Per-control bounds; when present a scaled sigmoid terminates the flow.
    #[serde(default)]
    pub bounds: Option<ControlBounds>,
}

fn default_blocks() -> usize {
    5
}
fn default_hidden_width() -> usize {
    128
}
fn default_hidden_layers() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl FlowConfig {
    pub fn new(control_dim: usize, horizon: usize, context_dim: usize) -> Self {
        Self {
            control_dim,
            horizon,
            context_dim,
            blocks: default_blocks(),
            hidden_width: default_hidden_width(),
            hidden_layers: default_hidden_layers(),
            layer_norm: true,
            bounds: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.control_dim * self.horizon
    }
}

/// Conditional RealNVP flow over stacked (time-major) control sequences.
///
/// `push` maps latents to controls: coupling blocks in order, then the
/// optional sigmoid layer. `pull` is its exact inverse.
#[derive(Debug, Clone)]
pub struct FlowModel {
    config: FlowConfig,
    blocks: Vec<CouplingBlock>,
    sigmoid: Option<SigmoidLayer>,
    params: ParamVector,
}

impl FlowModel {
    /// Randomly initialized hidden layers with zeroed output layers, so every
    /// coupling block starts as the identity.
    pub fn new(config: FlowConfig, seed: u64) -> Result<Self> {
        let (blocks, sigmoid, layout) = Self::structure(&config)?;
        let mut params = ParamVector::zeros(Arc::new(layout));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &blocks {
            b.scale_net().init(params.values_mut(), &mut rng, true);
            b.translate_net().init(params.values_mut(), &mut rng, true);
        }
        Ok(Self {
            config,
            blocks,
            sigmoid,
            params,
        })
    }

    pub fn with_params(config: FlowConfig, params: ParamVector) -> Result<Self> {
        let (blocks, sigmoid, layout) = Self::structure(&config)?;
        if params.layout().as_ref() != &layout {
            return Err(Error::Config("parameter layout does not match flow configuration".into()));
        }
        Ok(Self {
            config,
            blocks,
            sigmoid,
            params,
        })
    }

    fn structure(config: &FlowConfig) -> Result<(Vec<CouplingBlock>, Option<SigmoidLayer>, crate::diffnet::Layout)> {
        let dim = config.dim();
        if dim == 0 {
            return Err(Error::Config("flow dimension must be positive".into()));
        }
        if config.blocks > 0 && dim < 2 {
            return Err(Error::Config("coupling blocks need dimension ≥ 2".into()));
        }
        let mut builder = LayoutBuilder::default();
        let mut blocks = Vec::with_capacity(config.blocks);
        for k in 0..config.blocks {
            blocks.push(CouplingBlock::alternating(
                dim,
                k % 2,
                config.context_dim,
                config.hidden_width,
                config.hidden_layers,
                config.layer_norm,
                &mut builder,
                &format!("block{k}"),
            )?);
        }
        let sigmoid = match &config.bounds {
            Some(b) => {
                check_len("control bounds", config.control_dim, b.lower.len())?;
                Some(SigmoidLayer::broadcast(&b.lower, &b.upper, config.horizon)?)
            }
            None => None,
        };
        Ok((blocks, sigmoid, builder.finish()))
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn context_dim(&self) -> usize {
        self.config.context_dim
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    pub fn sigmoid(&self) -> Option<&SigmoidLayer> {
        self.sigmoid.as_ref()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check(&self, x: &[f64], context: &[f64]) -> Result<()> {
        check_len("flow input", self.dim(), x.len())?;
        check_len("flow context", self.config.context_dim, context.len())
    }

    pub fn push(&self, z: &[f64], context: &[f64]) -> Result<FlowEval> {
        self.check(z, context)?;
        let p = self.params.values();
        let mut y = z.to_vec();
        let mut log_det = 0.0;
        for b in &self.blocks {
            let e = b.forward(p, &y, context)?;
            y = e.output;
            log_det += e.log_det;
        }
        if let Some(s) = &self.sigmoid {
            let e = s.forward(&y)?;
            y = e.output;
            log_det += e.log_det;
        }
        Ok(FlowEval { output: y, log_det })
    }

    pub fn pull(&self, u: &[f64], context: &[f64]) -> Result<FlowEval> {
        self.pull_with_mode(u, context, BoundsMode::Strict)
    }

    pub fn pull_with_mode(&self, u: &[f64], context: &[f64], mode: BoundsMode) -> Result<FlowEval> {
        self.check(u, context)?;
        let p = self.params.values();
        let (mut y, mut log_det) = match &self.sigmoid {
            Some(s) => {
                let e = s.inverse(u, mode)?;
                (e.output, e.log_det)
            }
            None => (u.to_vec(), 0.0),
        };
        for b in self.blocks.iter().rev() {
            let e = b.inverse(p, &y, context)?;
            y = e.output;
            log_det += e.log_det;
        }
        Ok(FlowEval { output: y, log_det })
    }

    /// Evaluates `pull(u)` and accumulates into `grad` (flow layout length)
    /// the parameter gradient of `vᵀ·pull(u) + κ·logdet_pull(u)`.
    pub fn pull_vjp(
        &self,
        u: &[f64],
        context: &[f64],
        upstream: &[f64],
        log_det_weight: f64,
        grad: &mut [f64],
    ) -> Result<FlowEval> {
        self.check(u, context)?;
        check_len("pull upstream", self.dim(), upstream.len())?;
        check_len("flow gradient", self.num_params(), grad.len())?;
        let p = self.params.values();
        let (mut y, mut log_det) = match &self.sigmoid {
            Some(s) => {
                let e = s.inverse(u, BoundsMode::Strict)?;
                (e.output, e.log_det)
            }
            None => (u.to_vec(), 0.0),
        };
        let mut traces = Vec::with_capacity(self.blocks.len());
        for b in self.blocks.iter().rev() {
            let (e, tr) = b.inverse_traced(p, &y, context)?;
            y = e.output;
            log_det += e.log_det;
            traces.push(tr);
        }
        // traces[0] belongs to the last block, which pull applies first
        let mut g = upstream.to_vec();
        for (b, tr) in self.blocks.iter().zip(traces.iter().rev()) {
            g = b.inverse_backward(p, tr, &g, log_det_weight, grad)?;
        }
        Ok(FlowEval { output: y, log_det })
    }

    /// `log p_θ(pull(u)) + logdet_pull(u)`.
    pub fn log_likelihood(&self, latent: &LatentGaussian, u: &[f64], context: &[f64]) -> Result<f64> {
        let e = self.pull(u, context)?;
        Ok(latent.log_density(&e.output)? + e.log_det)
    }

    /// Log-likelihood together with its gradient with respect to the flow
    /// parameters and with respect to the latent mean.
    pub fn log_likelihood_grad(
        &self,
        latent: &LatentGaussian,
        u: &[f64],
        context: &[f64],
    ) -> Result<(f64, GradientRecord, Vec<f64>)> {
        let z = self.pull(u, context)?.output;
        let dz = latent.score_wrt_sample(&z)?;
        let mut grads = GradientRecord::zeros(self.params.layout().clone());
        let e = self.pull_vjp(u, context, &dz, 1.0, &mut grads.params)?;
        let ll = latent.log_density(&e.output)? + e.log_det;
        let dmean = latent.score_wrt_mean(&e.output)?;
        Ok((ll, grads, dmean))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "flow",
            "config": self.config,
            "masks": self.blocks.iter().map(|b| b.pass_indices().to_vec()).collect::<Vec<_>>(),
        });
        save_params(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_params(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("flow") {
            return Err(Error::Format(format!("{} is not a flow checkpoint", path.display())));
        }
        let config: FlowConfig = serde_json::from_value(meta["config"].clone())?;
        Self::with_params(config, params)
    }
}
