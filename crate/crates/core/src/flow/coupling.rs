//! Affine coupling block: the pass-through partition conditions a scale and
//! a translation applied to the other partition.

use crate::diffnet::{Activation, LayoutBuilder, Mlp, MlpTrace, NetworkSpec};
use crate::error::{check_len, Error, Result};

use super::FlowEval;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingBlock {
    pass: Vec<usize>,
    transformed: Vec<usize>,
    context_dim: usize,
    scale: Mlp,
    translate: Mlp,
}

/// Values cached by an inverse evaluation for the parameter backward pass.
pub(crate) struct InverseTrace {
    scale: MlpTrace,
    translate: MlpTrace,
    /// Transformed-partition entries of the block output.
    out_transformed: Vec<f64>,
    exp_neg_s: Vec<f64>,
}

impl CouplingBlock {
    /// Block whose pass-through set is every index with parity `parity`.
    #[allow(clippy::too_many_arguments)]
    pub fn alternating(
        dim: usize,
        parity: usize,
        context_dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        layer_norm: bool,
        builder: &mut LayoutBuilder,
        prefix: &str,
    ) -> Result<Self> {
        let pass: Vec<usize> = (0..dim).filter(|i| i % 2 == parity % 2).collect();
        let transformed: Vec<usize> = (0..dim).filter(|i| i % 2 != parity % 2).collect();
        Self::with_partition(
            pass,
            transformed,
            context_dim,
            hidden_width,
            hidden_layers,
            layer_norm,
            builder,
            prefix,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_partition(
        pass: Vec<usize>,
        transformed: Vec<usize>,
        context_dim: usize,
        hidden_width: usize,
        hidden_layers: usize,
        layer_norm: bool,
        builder: &mut LayoutBuilder,
        prefix: &str,
    ) -> Result<Self> {
        if pass.is_empty() || transformed.is_empty() {
            return Err(Error::Config("coupling partitions must both be nonempty".into()));
        }
        let input = pass.len() + context_dim;
        let scale = Mlp::register(
            NetworkSpec::hidden_stack(input, hidden_width, hidden_layers, transformed.len(), Activation::Tanh, layer_norm),
            builder,
            &format!("{prefix}.scale"),
        )?;
        let translate = Mlp::register(
            NetworkSpec::hidden_stack(input, hidden_width, hidden_layers, transformed.len(), Activation::Relu, layer_norm),
            builder,
            &format!("{prefix}.translate"),
        )?;
        Ok(Self {
            pass,
            transformed,
            context_dim,
            scale,
            translate,
        })
    }

    pub fn dim(&self) -> usize {
        self.pass.len() + self.transformed.len()
    }

    pub fn pass_indices(&self) -> &[usize] {
        &self.pass
    }

    pub fn transformed_indices(&self) -> &[usize] {
        &self.transformed
    }

    pub fn scale_net(&self) -> &Mlp {
        &self.scale
    }

    pub fn translate_net(&self) -> &Mlp {
        &self.translate
    }

    fn net_input(&self, y: &[f64], context: &[f64]) -> Vec<f64> {
        let mut inp: Vec<f64> = self.pass.iter().map(|&i| y[i]).collect();
        inp.extend_from_slice(context);
        inp
    }

    fn check(&self, y: &[f64], context: &[f64]) -> Result<()> {
        check_len("coupling input", self.dim(), y.len())?;
        check_len("flow context", self.context_dim, context.len())
    }

    /// Latent-to-control direction: `y₂ ← y₂ ⊙ exp(s) + t`.
    pub fn forward(&self, params: &[f64], y: &[f64], context: &[f64]) -> Result<FlowEval> {
        self.check(y, context)?;
        let inp = self.net_input(y, context);
        let s = self.scale.apply(params, &inp)?;
        let t = self.translate.apply(params, &inp)?;
        let mut output = y.to_vec();
        let mut log_det = 0.0;
        for (k, &i) in self.transformed.iter().enumerate() {
            output[i] = y[i] * s[k].exp() + t[k];
            log_det += s[k];
        }
        Ok(FlowEval { output, log_det })
    }

    /// Control-to-latent direction: `y₂ ← (y₂ − t) ⊙ exp(−s)`.
    pub fn inverse(&self, params: &[f64], y: &[f64], context: &[f64]) -> Result<FlowEval> {
        Ok(self.inverse_traced(params, y, context)?.0)
    }

    pub(crate) fn inverse_traced(
        &self,
        params: &[f64],
        y: &[f64],
        context: &[f64],
    ) -> Result<(FlowEval, InverseTrace)> {
        self.check(y, context)?;
        let inp = self.net_input(y, context);
        let scale = self.scale.forward(params, &inp)?;
        let translate = self.translate.forward(params, &inp)?;
        let (s, t) = (scale.output(), translate.output());
        let mut output = y.to_vec();
        let mut log_det = 0.0;
        let mut out_transformed = Vec::with_capacity(self.transformed.len());
        let mut exp_neg_s = Vec::with_capacity(self.transformed.len());
        for (k, &i) in self.transformed.iter().enumerate() {
            let e = (-s[k]).exp();
            let x = (y[i] - t[k]) * e;
            output[i] = x;
            out_transformed.push(x);
            exp_neg_s.push(e);
            log_det -= s[k];
        }
        let trace = InverseTrace {
            scale,
            translate,
            out_transformed,
            exp_neg_s,
        };
        Ok((FlowEval { output, log_det }, trace))
    }

    /// Given the upstream gradient on the inverse output and the weight on
    /// its log-determinant, accumulates parameter gradients and returns the
    /// gradient with respect to the inverse input.
    pub(crate) fn inverse_backward(
        &self,
        params: &[f64],
        trace: &InverseTrace,
        grad_out: &[f64],
        log_det_weight: f64,
        grad_params: &mut [f64],
    ) -> Result<Vec<f64>> {
        let n = self.transformed.len();
        let mut grad_in = grad_out.to_vec();
        let mut gs = Vec::with_capacity(n);
        let mut gt = Vec::with_capacity(n);
        for (k, &i) in self.transformed.iter().enumerate() {
            let g = grad_out[i];
            let e = trace.exp_neg_s[k];
            grad_in[i] = g * e;
            gt.push(-g * e);
            gs.push(-g * trace.out_transformed[k] - log_det_weight);
        }
        let gin_s = self.scale.backward(params, &trace.scale, &gs, grad_params)?;
        let gin_t = self.translate.backward(params, &trace.translate, &gt, grad_params)?;
        for (k, &i) in self.pass.iter().enumerate() {
            grad_in[i] += gin_s[k] + gin_t[k];
        }
        Ok(grad_in)
    }
}
