//! Scaled sigmoid output layer mapping R^d onto a box of control bounds.

use serde::{Deserialize, Serialize};

use super::FlowEval;
use crate::error::{check_len, Error, Result};

/// How `inverse` treats inputs on or outside the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundsMode {
    /// Reject with a domain error.
    #[default]
    Strict,
    /// Clamp into the open box by [`TOLERANT_MARGIN`] before inverting.
    Tolerant,
}

pub const TOLERANT_MARGIN: f64 = 1e-12;

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `u = w·σ(x) + b` element-wise with `w = upper − lower`, `b = lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidLayer {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SigmoidLayer {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("sigmoid bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Config("sigmoid layer needs at least one bound".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Config(format!("invalid control bounds ({l}, {u})")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Per-control bounds repeated over a time-major horizon.
    pub fn broadcast(lower: &[f64], upper: &[f64], horizon: usize) -> Result<Self> {
        let lo = lower.iter().copied().cycle().take(lower.len() * horizon).collect();
        let hi = upper.iter().copied().cycle().take(upper.len() * horizon).collect();
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn forward(&self, x: &[f64]) -> Result<FlowEval> {
        check_len("sigmoid input", self.dim(), x.len())?;
        let mut output = Vec::with_capacity(x.len());
        let mut log_det = 0.0;
        for ((&xi, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            let w = hi - lo;
            let mut u = w * logistic(xi) + lo;
            // keep the image inside the open box even where σ saturates
            if u <= lo {
                u = next_up(lo);
            } else if u >= hi {
                u = next_down(hi);
            }
            output.push(u);
            log_det += w.ln() - softplus(-xi) - softplus(xi);
        }
        Ok(FlowEval { output, log_det })
    }

    pub fn inverse(&self, u: &[f64], mode: BoundsMode) -> Result<FlowEval> {
        check_len("sigmoid inverse input", self.dim(), u.len())?;
        let mut output = Vec::with_capacity(u.len());
        let mut log_det = 0.0;
        for (i, ((&ui, &lo), &hi)) in u.iter().zip(&self.lower).zip(&self.upper).enumerate() {
            let w = hi - lo;
            let mut a = ui - lo;
            if !(a > 0.0 && a < w) {
                match mode {
                    BoundsMode::Strict => {
                        return Err(Error::Domain(format!(
                            "control {i} = {ui} is not strictly inside ({lo}, {hi})"
                        )))
                    }
                    BoundsMode::Tolerant => {
                        if !ui.is_finite() {
                            return Err(Error::Domain(format!("control {i} is not finite")));
                        }
                        a = a.clamp(TOLERANT_MARGIN, w - TOLERANT_MARGIN);
                    }
                }
            }
            let rest = w - a;
            output.push(a.ln() - rest.ln());
            log_det += w.ln() - a.ln() - rest.ln();
        }
        Ok(FlowEval { output, log_det })
    }
}

fn next_up(x: f64) -> f64 {
    if x >= 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}
