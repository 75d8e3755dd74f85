//! Shift models: map the solved mean of one step to the initial mean of the
//! next.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{
    load_params, save_params, Activation, LayoutBuilder, LstmCell, LstmState, LstmTrace, Mlp, MlpTrace, NetworkSpec,
    ParamVector,
};
use crate::error::{check_len, Error, Result};

/// Drops the first control of a time-major `(H, M)` sequence and appends a
/// zero control.
pub fn shift_standard(sequence: &[f64], control_dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; sequence.len()];
    if control_dim < sequence.len() {
        out[..sequence.len() - control_dim].copy_from_slice(&sequence[control_dim..]);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    /// Keep the mean as it is.
    #[default]
    Identity,
    /// Standard time shift applied in control space (push, shift, pull).
    Control,
    /// Learned single-hidden-layer network on the latent mean.
    Mlp,
    /// Learned LSTM on the latent mean with state carried across steps.
    Lstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    #[serde(default)]
    pub kind: ShiftKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Predict a correction added to the input mean instead of the mean
    /// itself.
    #[serde(default)]
    pub residual: bool,
}

fn default_hidden() -> usize {
    128
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            kind: ShiftKind::Identity,
            hidden: default_hidden(),
            residual: false,
        }
    }
}

impl ShiftConfig {
    pub fn learned(kind: ShiftKind, hidden: usize, residual: bool) -> Self {
        Self { kind, hidden, residual }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.kind, ShiftKind::Mlp | ShiftKind::Lstm)
    }
}

#[derive(Debug, Clone)]
enum ShiftNet {
    None,
    Mlp(Mlp),
    Lstm { cell: LstmCell, readout: Mlp },
}

/// Recurrent state threaded through an episode (empty for stateless shifts).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftState {
    pub lstm: Option<LstmState>,
}

#[derive(Debug, Clone)]
pub struct ShiftTrace {
    mlp: Option<MlpTrace>,
    lstm: Option<(LstmTrace, MlpTrace)>,
}

#[derive(Debug, Clone)]
pub struct ShiftModel {
    config: ShiftConfig,
    dim: usize,
    net: ShiftNet,
    params: ParamVector,
}

impl ShiftModel {
    /// Hidden layers are randomly initialized and output layers zeroed.
    pub fn new(config: ShiftConfig, dim: usize, seed: u64) -> Result<Self> {
        let (net, layout) = Self::structure(&config, dim)?;
        let mut params = ParamVector::zeros(Arc::new(layout));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &net {
            ShiftNet::None => {}
            ShiftNet::Mlp(m) => m.init(params.values_mut(), &mut rng, true),
            ShiftNet::Lstm { cell, readout } => {
                cell.init(params.values_mut(), &mut rng);
                readout.init(params.values_mut(), &mut rng, true);
            }
        }
        Ok(Self {
            config,
            dim,
            net,
            params,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(ShiftConfig::default(), dim, 0).expect("identity shift")
    }

    pub fn with_params(config: ShiftConfig, dim: usize, params: ParamVector) -> Result<Self> {
        let (net, layout) = Self::structure(&config, dim)?;
        if params.layout().as_ref() != &layout {
            return Err(Error::Config("parameter layout does not match shift configuration".into()));
        }
        Ok(Self {
            config,
            dim,
            net,
            params,
        })
    }

    fn structure(config: &ShiftConfig, dim: usize) -> Result<(ShiftNet, crate::diffnet::Layout)> {
        if dim == 0 {
            return Err(Error::Config("shift dimension must be positive".into()));
        }
        let mut builder = LayoutBuilder::default();
        let net = match config.kind {
            ShiftKind::Identity | ShiftKind::Control => ShiftNet::None,
            ShiftKind::Mlp => {
                let spec = NetworkSpec::hidden_stack(dim, config.hidden, 1, dim, Activation::Relu, false);
                ShiftNet::Mlp(Mlp::register(spec, &mut builder, "shift")?)
            }
            ShiftKind::Lstm => {
                let cell = LstmCell::register(dim, config.hidden, &mut builder, "shift.lstm")?;
                let spec = NetworkSpec::hidden_stack(config.hidden, config.hidden, 0, dim, Activation::Identity, false);
                let readout = Mlp::register(spec, &mut builder, "shift.readout")?;
                ShiftNet::Lstm { cell, readout }
            }
        };
        Ok((net, builder.finish()))
    }

    pub fn config(&self) -> &ShiftConfig {
        &self.config
    }

    pub fn kind(&self) -> ShiftKind {
        self.config.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn initial_state(&self) -> ShiftState {
        match &self.net {
            ShiftNet::Lstm { cell, .. } => ShiftState {
                lstm: Some(LstmState::zeros(cell.hidden_size())),
            },
            _ => ShiftState::default(),
        }
    }

    pub fn apply(&self, mean: &[f64], state: &ShiftState) -> Result<(Vec<f64>, ShiftState)> {
        let (out, next, _) = self.forward(mean, state)?;
        Ok((out, next))
    }

    pub fn forward(&self, mean: &[f64], state: &ShiftState) -> Result<(Vec<f64>, ShiftState, ShiftTrace)> {
        check_len("shift input", self.dim, mean.len())?;
        let p = self.params.values();
        let (mut out, next, trace) = match &self.net {
            ShiftNet::None => {
                if self.config.kind == ShiftKind::Control {
                    return Err(Error::Config("the control shift is applied by the controller".into()));
                }
                return Ok((
                    mean.to_vec(),
                    state.clone(),
                    ShiftTrace {
                        mlp: None,
                        lstm: None,
                    },
                ));
            }
            ShiftNet::Mlp(m) => {
                let tr = m.forward(p, mean)?;
                (
                    tr.output().to_vec(),
                    state.clone(),
                    ShiftTrace {
                        mlp: Some(tr),
                        lstm: None,
                    },
                )
            }
            ShiftNet::Lstm { cell, readout } => {
                let prev = match &state.lstm {
                    Some(s) => s.clone(),
                    None => LstmState::zeros(cell.hidden_size()),
                };
                let (next, ltr) = cell.forward(p, &prev, mean)?;
                let rtr = readout.forward(p, &next.h)?;
                (
                    rtr.output().to_vec(),
                    ShiftState { lstm: Some(next) },
                    ShiftTrace {
                        mlp: None,
                        lstm: Some((ltr, rtr)),
                    },
                )
            }
        };
        if self.config.residual {
            for (o, m) in out.iter_mut().zip(mean) {
                *o += m;
            }
        }
        Ok((out, next, trace))
    }

    /// Backward pass of one shift application. Accumulates parameter
    /// gradients into `grad_params` and returns the gradients with respect
    /// to the input mean and the incoming recurrent state.
    pub fn backward(
        &self,
        trace: &ShiftTrace,
        grad_out: &[f64],
        grad_state_out: Option<&LstmState>,
        grad_params: &mut [f64],
    ) -> Result<(Vec<f64>, Option<LstmState>)> {
        check_len("shift output gradient", self.dim, grad_out.len())?;
        check_len("shift gradient", self.num_params(), grad_params.len())?;
        let p = self.params.values();
        let (mut gin, gstate) = match (&self.net, trace) {
            (ShiftNet::None, _) => return Ok((grad_out.to_vec(), grad_state_out.cloned())),
            (ShiftNet::Mlp(m), ShiftTrace { mlp: Some(tr), .. }) => (m.backward(p, tr, grad_out, grad_params)?, None),
            (ShiftNet::Lstm { cell, readout }, ShiftTrace { lstm: Some((ltr, rtr)), .. }) => {
                let mut gh = readout.backward(p, rtr, grad_out, grad_params)?;
                let hs = cell.hidden_size();
                let gc = match grad_state_out {
                    Some(s) => {
                        check_len("shift state gradient", hs, s.h.len())?;
                        for (a, b) in gh.iter_mut().zip(&s.h) {
                            *a += b;
                        }
                        s.c.clone()
                    }
                    None => vec![0.0; hs],
                };
                let (dx, dprev) = cell.backward(p, ltr, &gh, &gc, grad_params)?;
                (dx, Some(dprev))
            }
            _ => return Err(Error::Argument("shift trace does not match the model".into())),
        };
        if self.config.residual {
            for (g, o) in gin.iter_mut().zip(grad_out) {
                *g += o;
            }
        }
        Ok((gin, gstate))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({ "kind": "shift", "config": self.config, "dim": self.dim });
        save_params(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_params(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("shift") {
            return Err(Error::Format(format!("{} is not a shift checkpoint", path.display())));
        }
        let config: ShiftConfig = serde_json::from_value(meta["config"].clone())?;
        let dim = meta["dim"]
            .as_u64()
            .ok_or_else(|| Error::Format("shift checkpoint lacks its width".into()))? as usize;
        Self::with_params(config, dim, params)
    }
}

/// Applies a learned or identity shift to a latent mean.
pub fn shift_learned(model: &ShiftModel, mean: &[f64], state: &ShiftState) -> Result<(Vec<f64>, ShiftState)> {
    model.apply(mean, state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shift() {
        assert_eq!(shift_standard(&[1.0, 2.0, 3.0], 1), vec![2.0, 3.0, 0.0]);
        assert_eq!(shift_standard(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 4.0, 0.0, 0.0]);
        let mut s = vec![1.0, -1.0, 2.0];
        for _ in 0..3 {
            s = shift_standard(&s, 1);
        }
        assert_eq!(s, vec![0.0; 3]);
    }

    #[test]
    fn zero_initialized_networks() {
        let mean = [0.3, -1.2, 2.0, 0.5];
        for kind in [ShiftKind::Mlp, ShiftKind::Lstm] {
            let m = ShiftModel::new(ShiftConfig::learned(kind, 8, false), 4, 3).unwrap();
            let (out, _) = m.apply(&mean, &m.initial_state()).unwrap();
            assert_eq!(out, vec![0.0; 4]);
            let r = ShiftModel::new(ShiftConfig::learned(kind, 8, true), 4, 3).unwrap();
            assert_eq!(r.apply(&mean, &r.initial_state()).unwrap().0, mean.to_vec());
        }
        let id = ShiftModel::identity(4);
        assert_eq!(id.apply(&mean, &id.initial_state()).unwrap().0, mean.to_vec());
        assert!(id.apply(&mean[..3], &id.initial_state()).is_err());
    }
}
