use crate::error::{check_len, Result};

#[derive(Debug, Clone)]
pub(crate) struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: f64,
}

pub(crate) fn layer_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormCache) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(h, (g, b))| g * h + b)
        .collect();
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns the input gradient; gain/bias gradients are accumulated.
pub(crate) fn layer_norm_backward_into(
    cache: &LayerNormCache,
    gain: &[f64],
    upstream: &[f64],
    grad_gain: &mut [f64],
    grad_bias: &mut [f64],
) -> Vec<f64> {
    let n = upstream.len() as f64;
    let mut dh = Vec::with_capacity(upstream.len());
    for i in 0..upstream.len() {
        grad_bias[i] += upstream[i];
        grad_gain[i] += upstream[i] * cache.normalized[i];
        dh.push(upstream[i] * gain[i]);
    }
    let mean_dh = dh.iter().sum::<f64>() / n;
    let mean_dh_h = dh
        .iter()
        .zip(&cache.normalized)
        .map(|(d, h)| d * h)
        .sum::<f64>()
        / n;
    dh.iter()
        .zip(&cache.normalized)
        .map(|(d, h)| cache.inv_std * (d - mean_dh - h * mean_dh_h))
        .collect()
}

/// `gain ⊙ (x − mean(x)) / sqrt(var(x) + eps) + bias`.
pub fn layer_norm_apply(input: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_len("layer-norm gain", input.len(), gain.len())?;
    check_len("layer-norm bias", input.len(), bias.len())?;
    if !(eps > 0.0) {
        return Err(crate::Error::Argument("layer-norm eps must be positive".into()));
    }
    Ok(layer_norm_forward(input, gain, bias, eps).0)
}

/// Gradients `(d input, d gain, d bias)` of `upstreamᵀ·layer_norm(input)`.
pub fn layer_norm_backward(
    input: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_len("layer-norm gain", input.len(), gain.len())?;
    check_len("layer-norm bias", input.len(), bias.len())?;
    check_len("layer-norm upstream", input.len(), upstream.len())?;
    let (_, cache) = layer_norm_forward(input, gain, bias, eps);
    let mut gg = vec![0.0; input.len()];
    let mut gb = vec![0.0; input.len()];
    let gx = layer_norm_backward_into(&cache, gain, upstream, &mut gg, &mut gb);
    Ok((gx, gg, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let y = layer_norm_apply(&[3.0; 5], &[1.0; 5], &[0.0; 5], 1e-5).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_pair_is_unit_scaled() {
        let y = layer_norm_apply(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], 1e-15).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gain_returns_bias() {
        let bias = [0.5, -0.25, 2.0];
        let y = layer_norm_apply(&[9.0, -4.0, 1.0], &[0.0; 3], &bias, 1e-5).unwrap();
        assert_eq!(y, bias.to_vec());
    }

    #[test]
    fn rejects_mismatched_lengths_and_bad_eps() {
        assert!(layer_norm_apply(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1e-5).is_err());
        assert!(layer_norm_apply(&[1.0, 2.0], &[1.0; 2], &[0.0; 2], 0.0).is_err());
    }
}
