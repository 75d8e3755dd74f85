//! Halton low-discrepancy points and their Gaussian transforms.

use super::gaussian::LatentGaussian;
use super::normal::standard_normal_quantile;
use crate::error::{check_len, Error, Result};

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    value
}

/// Halton points for indices `start..start+count` (1-based) in `dim`
/// dimensions using the first `dim` primes as bases.
pub fn halton_sequence(start: u64, count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if start == 0 {
        return Err(Error::Argument("Halton indices start at 1".into()));
    }
    let bases = first_primes(dim);
    Ok((0..count as u64)
        .map(|k| bases.iter().map(|&b| radical_inverse(start + k, b)).collect())
        .collect())
}

/// Standard-normal points obtained by pushing Halton points through Φ⁻¹.
pub fn normal_points(start: u64, count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    halton_sequence(start, count, dim)?
        .into_iter()
        .map(|row| row.into_iter().map(standard_normal_quantile).collect())
        .collect()
}

/// First Halton index used for a given seed; each seed gets its own block
/// of `block` consecutive indices.
pub fn seeded_start(seed: u64, block: usize) -> u64 {
    1 + seed.wrapping_mul(block.max(1) as u64)
}

/// The mean followed by `μ + σ ⊙ Φ⁻¹(h)` for each Halton point `h`.
pub fn gaussian_from_halton(halton: &[Vec<f64>], latent: &LatentGaussian) -> Result<Vec<Vec<f64>>> {
    let std = latent.std_dev();
    let mut out = Vec::with_capacity(halton.len() + 1);
    out.push(latent.mean.clone());
    for h in halton {
        check_len("Halton point", latent.dim(), h.len())?;
        let mut z = Vec::with_capacity(h.len());
        for ((&v, m), s) in h.iter().zip(&latent.mean).zip(&std) {
            z.push(m + s * standard_normal_quantile(v)?);
        }
        out.push(z);
    }
    Ok(out)
}
