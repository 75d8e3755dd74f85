//! Dense feed-forward networks with hand-derived backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer_norm::{layer_norm_backward_into, layer_norm_forward, LayerNormCache};
use super::params::{GradientRecord, LayoutBuilder, ParamVector};
use crate::error::{check_len, Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub activation: Activation,
    pub layer_norm: bool,
}

/// Layer sizes, activations and layer-norm flags of a dense network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// `hidden` layers of width `width` using `activation` (optionally
    /// layer-normalized before the activation), followed by a linear output.
    pub fn hidden_stack(
        input: usize,
        width: usize,
        hidden: usize,
        output: usize,
        activation: Activation,
        layer_norm: bool,
    ) -> Self {
        let mut layers = vec![
            LayerSpec {
                size: width,
                activation,
                layer_norm,
            };
            hidden
        ];
        layers.push(LayerSpec {
            size: output,
            activation: Activation::Identity,
            layer_norm: false,
        });
        Self { input, layers }
    }

    pub fn output(&self) -> usize {
        self.layers.last().map(|l| l.size).unwrap_or(self.input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.input == 0 || self.layers.iter().any(|l| l.size == 0) {
            return Err(Error::Config("network layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerOffsets {
    weight: usize,
    bias: usize,
    ln_gain: Option<usize>,
    ln_bias: Option<usize>,
}

/// A network spec bound to its segments inside a parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    spec: NetworkSpec,
    offsets: Vec<LayerOffsets>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Vec<f64>,
    ln: Option<LayerNormCache>,
    normed: Vec<f64>,
    output: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    layers: Vec<LayerTrace>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("validated network").output
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.layers.pop().expect("validated network").output
    }
}

impl Mlp {
    /// Registers weight/bias (and layer-norm) segments under `prefix`.
    pub fn register(spec: NetworkSpec, builder: &mut LayoutBuilder, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut fan_in = spec.input;
        for (i, layer) in spec.layers.iter().enumerate() {
            let weight = builder.push(&format!("{prefix}.l{i}.weight"), &[layer.size, fan_in])?;
            let bias = builder.push(&format!("{prefix}.l{i}.bias"), &[layer.size])?;
            let (ln_gain, ln_bias) = if layer.layer_norm {
                (
                    Some(builder.push(&format!("{prefix}.l{i}.ln_gain"), &[layer.size])?),
                    Some(builder.push(&format!("{prefix}.l{i}.ln_bias"), &[layer.size])?),
                )
            } else {
                (None, None)
            };
            offsets.push(LayerOffsets {
                weight,
                bias,
                ln_gain,
                ln_bias,
            });
            fan_in = layer.size;
        }
        Ok(Self { spec, offsets })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_size(&self) -> usize {
        self.spec.input
    }

    pub fn output_size(&self) -> usize {
        self.spec.output()
    }

    /// Fan-in uniform weights, zero biases, unit layer-norm gains. With
    /// `zero_last` the output layer starts at exactly zero.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R, zero_last: bool) {
        let mut fan_in = self.spec.input;
        let last = self.spec.layers.len() - 1;
        for (i, (layer, off)) in self.spec.layers.iter().zip(&self.offsets).enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = &mut params[off.weight..off.weight + layer.size * fan_in];
            if zero_last && i == last {
                w.fill(0.0);
            } else {
                w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
            }
            params[off.bias..off.bias + layer.size].fill(0.0);
            if let (Some(g), Some(b)) = (off.ln_gain, off.ln_bias) {
                params[g..g + layer.size].fill(1.0);
                params[b..b + layer.size].fill(0.0);
            }
            fan_in = layer.size;
        }
    }

    pub fn apply(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(params, input)?.into_output())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<MlpTrace> {
        check_len("network input", self.spec.input, input.len())?;
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.spec.layers.len());
        let mut x = input.to_vec();
        let mut fan_in = self.spec.input;
        for (layer, off) in self.spec.layers.iter().zip(&self.offsets) {
            let w = &params[off.weight..off.weight + layer.size * fan_in];
            let b = &params[off.bias..off.bias + layer.size];
            let pre: Vec<f64> = w
                .chunks_exact(fan_in)
                .zip(b)
                .map(|(row, bj)| row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() + bj)
                .collect();
            let (normed, ln) = match (off.ln_gain, off.ln_bias) {
                (Some(g), Some(bo)) => {
                    let (out, cache) = layer_norm_forward(
                        &pre,
                        &params[g..g + layer.size],
                        &params[bo..bo + layer.size],
                        LAYER_NORM_EPS,
                    );
                    (out, Some(cache))
                }
                _ => (pre, None),
            };
            let output: Vec<f64> = normed.iter().map(|&v| layer.activation.apply(v)).collect();
            let next = output.clone();
            layers.push(LayerTrace {
                input: std::mem::replace(&mut x, next),
                ln,
                normed,
                output,
            });
            fan_in = layer.size;
        }
        Ok(MlpTrace { layers })
    }

    /// Accumulates the parameter gradient of `upstreamᵀ·output` into
    /// `grad_params` (full layout length) and returns the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &MlpTrace,
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Result<Vec<f64>> {
        check_len("upstream gradient", self.output_size(), upstream.len())?;
        let mut g = upstream.to_vec();
        for ((layer, off), tr) in self
            .spec
            .layers
            .iter()
            .zip(&self.offsets)
            .zip(&trace.layers)
            .rev()
        {
            let fan_in = tr.input.len();
            // through the activation
            for ((gj, &n), &y) in g.iter_mut().zip(&tr.normed).zip(&tr.output) {
                *gj *= layer.activation.derivative(n, y);
            }
            if let (Some(gain), Some(bo), Some(cache)) = (off.ln_gain, off.ln_bias, &tr.ln) {
                let (head, tail) = split_two(grad_params, gain, bo, layer.size);
                g = layer_norm_backward_into(cache, &params[gain..gain + layer.size], &g, head, tail);
            }
            let w = &params[off.weight..off.weight + layer.size * fan_in];
            let mut gx = vec![0.0; fan_in];
            {
                let gw = &mut grad_params[off.weight..off.weight + layer.size * fan_in];
                for ((row, grow), &gj) in w.chunks_exact(fan_in).zip(gw.chunks_exact_mut(fan_in)).zip(&g) {
                    if gj == 0.0 {
                        continue;
                    }
                    for ((gwi, &xi), (gxi, &wi)) in grow.iter_mut().zip(&tr.input).zip(gx.iter_mut().zip(row)) {
                        *gwi += gj * xi;
                        *gxi += gj * wi;
                    }
                }
            }
            for (gb, gj) in grad_params[off.bias..off.bias + layer.size].iter_mut().zip(&g) {
                *gb += gj;
            }
            g = gx;
        }
        Ok(g)
    }
}

/// Disjoint mutable views of two equally sized segments.
fn split_two(buf: &mut [f64], a: usize, b: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + len <= b || b + len <= a);
    if a < b {
        let (lo, hi) = buf.split_at_mut(b);
        (&mut lo[a..a + len], &mut hi[..len])
    } else {
        let (lo, hi) = buf.split_at_mut(a);
        let (ga, gb) = (&mut hi[..len], &mut lo[b..b + len]);
        (ga, gb)
    }
}

pub fn mlp_apply(params: &ParamVector, net: &Mlp, input: &[f64]) -> Result<Vec<f64>> {
    net.apply(params.values(), input)
}

/// Parameter and input gradients of `upstreamᵀ·net(input)`.
pub fn mlp_backward(
    params: &ParamVector,
    net: &Mlp,
    input: &[f64],
    upstream: &[f64],
) -> Result<GradientRecord> {
    let trace = net.forward(params.values(), input)?;
    let mut grads = GradientRecord::zeros(params.layout().clone());
    let gx = net.backward(params.values(), &trace, upstream, &mut grads.params)?;
    grads.input = Some(gx);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn build(spec: NetworkSpec) -> (Mlp, ParamVector) {
        let mut b = LayoutBuilder::default();
        let net = Mlp::register(spec, &mut b, "net").unwrap();
        (net, ParamVector::zeros(Arc::new(b.finish())))
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let spec = NetworkSpec {
            input: 3,
            layers: vec![LayerSpec {
                size: 2,
                activation: Activation::Tanh,
                layer_norm: false,
            }],
        };
        let (net, mut p) = build(spec);
        p.segment_mut("net.l0.bias").unwrap().copy_from_slice(&[0.3, -2.0]);
        let y = mlp_apply(&p, &net, &[5.0, -1.0, 7.0]).unwrap();
        assert_eq!(y, vec![0.3f64.tanh(), (-2.0f64).tanh()]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = NetworkSpec {
            input: 3,
            layers: vec![LayerSpec {
                size: 3,
                activation: Activation::Identity,
                layer_norm: false,
            }],
        };
        let (net, mut p) = build(spec);
        let w = p.segment_mut("net.l0.weight").unwrap();
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = [0.25, -3.5, 1e3];
        assert_eq!(mlp_apply(&p, &net, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn linear_layer_gradient_is_closed_form() {
        let spec = NetworkSpec {
            input: 2,
            layers: vec![LayerSpec {
                size: 2,
                activation: Activation::Identity,
                layer_norm: false,
            }],
        };
        let (net, mut p) = build(spec);
        p.segment_mut("net.l0.weight").unwrap().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let x = [0.5, -1.5];
        let g = [2.0, -1.0];
        let rec = mlp_backward(&p, &net, &x, &g).unwrap();
        // dW = g xᵀ, db = g, dx = Wᵀ g
        assert_eq!(rec.segment("net.l0.weight").unwrap(), &[1.0, -3.0, -0.5, 1.5]);
        assert_eq!(rec.segment("net.l0.bias").unwrap(), &g);
        assert_eq!(rec.input.unwrap(), vec![2.0 - 3.0, 4.0 - 4.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let spec = NetworkSpec::hidden_stack(4, 8, 2, 3, Activation::Tanh, true);
        let (net, mut p) = build(spec);
        net.init(p.values_mut(), &mut ChaCha8Rng::seed_from_u64(3), false);
        let rec = mlp_backward(&p, &net, &[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(rec.params.iter().all(|&g| g == 0.0));
        assert!(rec.input.unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = NetworkSpec::hidden_stack(4, 8, 1, 3, Activation::Relu, false);
        let (net, p) = build(spec);
        assert!(matches!(mlp_apply(&p, &net, &[1.0]), Err(Error::Dimension { .. })));
        assert!(mlp_backward(&p, &net, &[0.0; 4], &[1.0]).is_err());
    }
}
