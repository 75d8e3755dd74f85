use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gradient::{accumulate_pull_vjps, step_adjoints, step_loss, LatentMap, SampleAdjoint};
use crate::controller::{Nfmpc, NfmpcConfig, ShiftKind, ShiftModel, StepRecord};
use crate::diffnet::LstmState;
use crate::envs::{rollout, Environment, Rollout};
use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// The recorded forward pass of one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTape {
    pub records: Vec<StepRecord>,
    /// Per-step losses `Ĵ_t`.
    pub losses: Vec<f64>,
    /// Episode loss `ℓ = Σ_t Ĵ_t`.
    pub total: f64,
    pub latent_var: f64,
    pub step_size: f64,
}

impl EpisodeTape {
    pub fn from_records(records: Vec<StepRecord>, latent_var: f64, step_size: f64) -> Result<Self> {
        let losses = records
            .iter()
            .enumerate()
            .map(|(t, r)| {
                r.batch.validate()?;
                let l = step_loss(&r.batch, &r.push_log_dets, &r.mean, latent_var)?;
                if l.is_finite() {
                    Ok(l)
                } else {
                    Err(Error::NonFinite(format!("loss at timestep {t}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            records,
            losses: losses.clone(),
            total: losses.iter().sum(),
            latent_var,
            step_size,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Runs NFMPC in closed loop for up to `steps` steps, recording the tape.
pub fn run_episode(
    flow: Arc<FlowModel>,
    shift: Arc<ShiftModel>,
    config: &NfmpcConfig,
    env: &mut dyn Environment,
    steps: usize,
) -> Result<(EpisodeTape, Rollout)> {
    let mut ctrl = Nfmpc::new(config.clone(), flow, shift)?;
    ctrl.set_recording(true);
    let out = rollout(&mut ctrl, env, steps, 0)?;
    let tape = EpisodeTape::from_records(ctrl.take_records(), config.latent_var, config.step_size)?;
    Ok((tape, out))
}

/// Parameter gradients of an episode loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeGradient {
    pub flow: Vec<f64>,
    pub shift: Vec<f64>,
}

impl TapeGradient {
    pub fn norm(&self) -> f64 {
        self.flow.iter().chain(&self.shift).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Timesteps whose flow VJPs are evaluated concurrently.
const VJP_GROUP: usize = 8;

/// Reverse-time gradient of the episode loss. The mean adjoints are
/// propagated through the latent update and the shift model first; the
/// per-sample flow VJPs are then summed in timestep order.
pub fn backward_episode<M: LatentMap + ?Sized>(tape: &EpisodeTape, map: &M, shift: &ShiftModel) -> Result<TapeGradient> {
    let n = tape.len();
    let d = map.dim();
    let mut shift_grad = vec![0.0; shift.num_params()];
    let mut per_step: Vec<Vec<SampleAdjoint>> = vec![Vec::new(); n];
    let mut gmean = vec![0.0; d];
    let mut gstate: Option<LstmState> = None;
    for t in (0..n).rev() {
        let r = &tape.records[t];
        let (adjoints, gprior) = step_adjoints(&r.batch, &r.prior_mean, &r.mean, tape.latent_var, tape.step_size, &gmean)?;
        if adjoints.iter().any(|a| !a.kappa.is_finite() || a.v.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("sample adjoints at timestep {t}")));
        }
        per_step[t] = adjoints;
        if t == 0 {
            break;
        }
        // μ̃_t = Φ(μ_{t−1}); the control-space shift is a stop-gradient
        let prev = &tape.records[t - 1];
        gmean = match shift.kind() {
            ShiftKind::Control => vec![0.0; d],
            _ => {
                let (_, _, trace) = shift.forward(&prev.mean, &prev.shift_state)?;
                let (gin, gs) = shift.backward(&trace, &gprior, gstate.as_ref(), &mut shift_grad)?;
                gstate = gs;
                gin
            }
        };
        if gmean.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("shift backward at timestep {t}")));
        }
    }
    let mut flow_grad = vec![0.0; map.num_params()];
    let steps: Vec<usize> = (0..n).collect();
    for group in steps.chunks(VJP_GROUP) {
        let parts = parallel_vjps(map, tape, &per_step, group)?;
        for (t, part) in group.iter().zip(parts) {
            if part.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("flow gradient at timestep {t}")));
            }
            for (a, b) in flow_grad.iter_mut().zip(&part) {
                *a += b;
            }
        }
    }
    Ok(TapeGradient {
        flow: flow_grad,
        shift: shift_grad,
    })
}

fn parallel_vjps<M: LatentMap + ?Sized>(
    map: &M,
    tape: &EpisodeTape,
    per_step: &[Vec<SampleAdjoint>],
    group: &[usize],
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    group
        .par_iter()
        .map(|&t| {
            let r = &tape.records[t];
            accumulate_pull_vjps(map, &r.batch, &r.context, &per_step[t])
        })
        .collect()
}
