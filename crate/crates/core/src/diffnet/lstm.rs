//! Single LSTM cell (input, forget, candidate, output gate order).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{LayoutBuilder, ParamVector};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmCell {
    input: usize,
    hidden: usize,
    w_input: usize,
    w_hidden: usize,
    bias: usize,
}

/// Cached activations of one step.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations laid out as [i | f | g | o].
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmCell {
    pub fn register(input: usize, hidden: usize, builder: &mut LayoutBuilder, prefix: &str) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config("LSTM sizes must be positive".into()));
        }
        let w_input = builder.push(&format!("{prefix}.w_input"), &[4 * hidden, input])?;
        let w_hidden = builder.push(&format!("{prefix}.w_hidden"), &[4 * hidden, hidden])?;
        let bias = builder.push(&format!("{prefix}.bias"), &[4 * hidden])?;
        Ok(Self {
            input,
            hidden,
            w_input,
            w_hidden,
            bias,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Uniform ±1/√hidden weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        let n = 4 * self.hidden;
        for v in &mut params[self.w_input..self.w_input + n * self.input] {
            *v = rng.random_range(-bound..bound);
        }
        for v in &mut params[self.w_hidden..self.w_hidden + n * self.hidden] {
            *v = rng.random_range(-bound..bound);
        }
        let b = &mut params[self.bias..self.bias + n];
        b.fill(0.0);
        b[self.hidden..2 * self.hidden].fill(1.0);
    }

    fn check(&self, state: &LstmState, input: &[f64]) -> Result<()> {
        check_len("LSTM input", self.input, input.len())?;
        check_len("LSTM hidden state", self.hidden, state.h.len())?;
        check_len("LSTM cell state", self.hidden, state.c.len())
    }

    pub fn forward(&self, params: &[f64], state: &LstmState, input: &[f64]) -> Result<(LstmState, LstmTrace)> {
        self.check(state, input)?;
        let hs = self.hidden;
        let n = 4 * hs;
        let wx = &params[self.w_input..self.w_input + n * self.input];
        let wh = &params[self.w_hidden..self.w_hidden + n * hs];
        let b = &params[self.bias..self.bias + n];
        let mut gates = Vec::with_capacity(n);
        for k in 0..n {
            let rx = &wx[k * self.input..(k + 1) * self.input];
            let rh = &wh[k * hs..(k + 1) * hs];
            let a = b[k]
                + rx.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                + rh.iter().zip(&state.h).map(|(w, h)| w * h).sum::<f64>();
            let gate = k / hs;
            gates.push(if gate == 2 { a.tanh() } else { sigmoid(a) });
        }
        let mut c = Vec::with_capacity(hs);
        let mut h = Vec::with_capacity(hs);
        let mut tanh_c = Vec::with_capacity(hs);
        for j in 0..hs {
            let (i, f, g, o) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
            let cj = f * state.c[j] + i * g;
            let tc = cj.tanh();
            c.push(cj);
            tanh_c.push(tc);
            h.push(o * tc);
        }
        let trace = LstmTrace {
            x: input.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        Ok((LstmState { h, c }, trace))
    }

    pub fn step(&self, params: &[f64], state: &LstmState, input: &[f64]) -> Result<LstmState> {
        Ok(self.forward(params, state, input)?.0)
    }

    /// Backward pass of one step given upstream gradients on the new hidden
    /// and cell states. Parameter gradients are accumulated into
    /// `grad_params`; returns `(d input, d previous state)`.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &LstmTrace,
        grad_h: &[f64],
        grad_c: &[f64],
        grad_params: &mut [f64],
    ) -> Result<(Vec<f64>, LstmState)> {
        let hs = self.hidden;
        check_len("LSTM hidden gradient", hs, grad_h.len())?;
        check_len("LSTM cell gradient", hs, grad_c.len())?;
        let n = 4 * hs;
        let g = &trace.gates;
        let mut da = vec![0.0; n];
        let mut dc_prev = vec![0.0; hs];
        for j in 0..hs {
            let (i, f, gg, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
            let tc = trace.tanh_c[j];
            let d_o = grad_h[j] * tc;
            let dc = grad_c[j] + grad_h[j] * o * (1.0 - tc * tc);
            da[j] = dc * gg * i * (1.0 - i);
            da[hs + j] = dc * trace.c_prev[j] * f * (1.0 - f);
            da[2 * hs + j] = dc * i * (1.0 - gg * gg);
            da[3 * hs + j] = d_o * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        let mut dx = vec![0.0; self.input];
        let mut dh_prev = vec![0.0; hs];
        for (k, &dk) in da.iter().enumerate() {
            grad_params[self.bias + k] += dk;
            if dk == 0.0 {
                continue;
            }
            let rx = self.w_input + k * self.input;
            for (m, &xm) in trace.x.iter().enumerate() {
                grad_params[rx + m] += dk * xm;
                dx[m] += dk * params[rx + m];
            }
            let rh = self.w_hidden + k * hs;
            for (m, &hm) in trace.h_prev.iter().enumerate() {
                grad_params[rh + m] += dk * hm;
                dh_prev[m] += dk * params[rh + m];
            }
        }
        Ok((
            dx,
            LstmState {
                h: dh_prev,
                c: dc_prev,
            },
        ))
    }
}

pub fn lstm_step(params: &ParamVector, cell: &LstmCell, state: &LstmState, input: &[f64]) -> Result<LstmState> {
    cell.step(params.values(), state, input)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_params_and_state_stay_zero() {
        let mut b = LayoutBuilder::default();
        let cell = LstmCell::register(3, 4, &mut b, "lstm").unwrap();
        let p = ParamVector::zeros(Arc::new(b.finish()));
        let s = lstm_step(&p, &cell, &LstmState::zeros(4), &[1.0, -2.0, 0.5]).unwrap();
        assert!(s.h.iter().chain(&s.c).all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_steps_are_bit_identical() {
        let mut b = LayoutBuilder::default();
        let cell = LstmCell::register(2, 5, &mut b, "lstm").unwrap();
        let mut p = ParamVector::zeros(Arc::new(b.finish()));
        cell.init(p.values_mut(), &mut ChaCha8Rng::seed_from_u64(11));
        let run = || {
            let mut s = LstmState::zeros(5);
            for _ in 0..20 {
                s = lstm_step(&p, &cell, &s, &[0.3, -0.7]).unwrap();
            }
            s
        };
        let (a, b) = (run(), run());
        assert!(a.h.iter().zip(&b.h).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.c.iter().zip(&b.c).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut b = LayoutBuilder::default();
        let cell = LstmCell::register(2, 3, &mut b, "lstm").unwrap();
        let mut p = ParamVector::zeros(Arc::new(b.finish()));
        cell.init(p.values_mut(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.segment("lstm.bias").unwrap(), &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut b = LayoutBuilder::default();
        let cell = LstmCell::register(2, 3, &mut b, "lstm").unwrap();
        let p = ParamVector::zeros(Arc::new(b.finish()));
        assert!(lstm_step(&p, &cell, &LstmState::zeros(2), &[0.0, 0.0]).is_err());
    }
}
