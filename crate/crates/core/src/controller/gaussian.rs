use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Factorized Gaussian over the stacked latent sequence. Only the mean is
/// adapted online; the diagonal variance stays fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Softmax temperature β.
    pub temperature: f64,
    /// Mean step size γ.
    pub step_size: f64,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>, temperature: f64, step_size: f64) -> Result<Self> {
        check_len("latent variance", mean.len(), var.len())?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("latent mean".into()));
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Argument("latent variance must be positive".into()));
        }
        validate_temperature_step(temperature, step_size)?;
        Ok(Self {
            mean,
            var,
            temperature,
            step_size,
        })
    }

    pub fn isotropic(dim: usize, var: f64, temperature: f64, step_size: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![var; dim], temperature, step_size)
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(dim, 1.0, 1.0, 1.0).expect("valid standard normal")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_mean(&self, mean: Vec<f64>) -> Self {
        Self { mean, ..self.clone() }
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_len("latent sample", self.dim(), z.len())?;
        Ok(z
            .iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((z, m), v)| -0.5 * ((z - m) * (z - m) / v + (2.0 * PI * v).ln()))
            .sum())
    }

    /// ∂ log p / ∂ z.
    pub fn score_wrt_sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("latent sample", self.dim(), z.len())?;
        Ok(z.iter().zip(&self.mean).zip(&self.var).map(|((z, m), v)| -(z - m) / v).collect())
    }

    /// ∂ log p / ∂ μ.
    pub fn score_wrt_mean(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.score_wrt_sample(z)?.into_iter().map(|g| -g).collect())
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

pub(crate) fn validate_temperature_step(temperature: f64, step_size: f64) -> Result<()> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be positive, got {temperature}")));
    }
    if !(step_size > 0.0 && step_size <= 1.0) {
        return Err(Error::Argument(format!("step size must lie in (0, 1], got {step_size}")));
    }
    Ok(())
}

/// Control-space Gaussian with a full covariance across horizon and control
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGaussian {
    pub mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    pub temperature: f64,
    pub step_size: f64,
}

impl ControlGaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, temperature: f64, step_size: f64) -> Result<Self> {
        check_len("control covariance", mean.len(), cov.nrows())?;
        check_len("control covariance", mean.len(), cov.ncols())?;
        validate_temperature_step(temperature, step_size)?;
        let chol = cholesky_factor(&cov)?;
        Ok(Self {
            mean,
            cov,
            chol,
            temperature,
            step_size,
        })
    }

    pub fn isotropic(dim: usize, var: f64, temperature: f64, step_size: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], DMatrix::from_diagonal_element(dim, dim, var), temperature, step_size)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn set_covariance(&mut self, cov: DMatrix<f64>) -> Result<()> {
        check_len("control covariance", self.dim(), cov.nrows())?;
        self.chol = cholesky_factor(&cov)?;
        self.cov = cov;
        Ok(())
    }

    /// `mean + L·q` for a standard-normal point `q`.
    pub fn transform(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = self.mean.clone();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol[(i, j)] * q[j];
            }
            out[i] += acc;
        }
        out
    }
}

fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Argument("covariance is not positive definite".into()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[allow(dead_code)]
pub(crate) fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_density_at_mean() {
        let g = LatentGaussian::standard(2);
        assert!((g.log_density(&[0.0, 0.0]).unwrap() + (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(LatentGaussian::new(vec![0.0], vec![0.0], 1.0, 1.0).is_err());
        assert!(LatentGaussian::isotropic(2, 1.0, 0.0, 1.0).is_err());
        assert!(LatentGaussian::isotropic(2, 1.0, 1.0, 1.5).is_err());
        assert!(ControlGaussian::new(vec![0.0; 2], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn diagonal_transform_scales_by_std() {
        let g = ControlGaussian::isotropic(3, 4.0, 1.0, 1.0).unwrap();
        assert_eq!(g.transform(&[1.0, -0.5, 0.0]), vec![2.0, -1.0, 0.0]);
    }
}
