//! Small dense helpers for the d ≤ 16 matrices that show up in posterior
//! covariances and the matched-noise square root.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues above this (negative) floor are clamped to zero.
pub const EIGEN_CLAMP: f64 = -1e-10;

/// Symmetrises `m` and clamps eigenvalues in `[EIGEN_CLAMP, 0)` to zero.
/// Fails if an eigenvalue is below the floor.
pub fn clamp_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < EIGEN_CLAMP) {
        return Err(Error::Numerical(format!("matrix not PSD: eigenvalue {bad:.3e}")));
    }
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Symmetric PSD square root.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < EIGEN_CLAMP) {
        return Err(Error::Numerical(format!(
            "matrix square root of non-PSD matrix: eigenvalue {bad:.3e}"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `log det(m)` for a symmetric positive definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Log-density of N(mean, cov) with a precomputed Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).expect("triangular solve");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// Scalar normal log-density.
#[inline]
pub fn log_normal_1d(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + r * r / var)
}

/// `log Σ exp(v)`; `-inf` for an empty or all-`-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = psd_sqrt(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn clamps_tiny_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-13]);
        let c = clamp_psd(&m).unwrap();
        let eig = SymmetricEigen::new(c);
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-15));
        let bad = DMatrix::from_row_slice(1, 1, &[-1e-3]);
        assert!(clamp_psd(&bad).is_err());
        assert!(psd_sqrt(&bad).is_err());
    }

    #[test]
    fn density_matches_scalar_formula() {
        let g = GaussianDensity::new(&[1.0], &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((g.log_pdf(&[0.3]) - log_normal_1d(0.3, 1.0, 2.0)).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
