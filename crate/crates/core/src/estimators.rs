//! Plug-in drifts `f_k` and stochastic kernels `Q(· | z, t)` for the sampler,
//! plus Tweedie's affine map between the conditional mean and the score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::psd_sqrt;
use crate::rng::Stream;
use crate::targets::{Posterior, TargetModel};

/// A deterministic drift built from the exact conditional mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EstimatorSpec {
    ExactPosteriorMean,
    /// Conditional mean plus a constant offset.
    Biased { bias: Vec<f64> },
    /// Conditional mean times a constant.
    Scaled { factor: f64 },
    Zero,
}

/// A Markov kernel replacing the posterior draw `X_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Exact draw from the posterior (`Q = P`).
    PosteriorExact,
    /// Gaussian with the posterior mean and covariance (two matched moments).
    GaussianMatched,
    /// The posterior mean, deterministically (one matched moment).
    MeanOnly,
}

impl EstimatorSpec {
    pub fn validate(&self, model: &TargetModel) -> Result<()> {
        match self {
            EstimatorSpec::Biased { bias } => {
                ensure_finite(bias, "estimator bias")?;
                if bias.len() != model.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "bias has dimension {}, model has {}",
                        bias.len(),
                        model.dim()
                    )));
                }
            }
            EstimatorSpec::Scaled { factor } if !factor.is_finite() => {
                return Err(Error::NonFinite("estimator scale"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::ExactPosteriorMean => "exact".into(),
            EstimatorSpec::Biased { bias } => {
                let parts: Vec<String> = bias.iter().map(|b| format!("{b}")).collect();
                format!("biased[{}]", parts.join(";"))
            }
            EstimatorSpec::Scaled { factor } => format!("scaled[{factor}]"),
            EstimatorSpec::Zero => "zero".into(),
        }
    }

    /// Applies the drift to a posterior that is already current for `(y, t)`.
    pub fn apply(&self, post: &Posterior, out: &mut [f64]) {
        match self {
            EstimatorSpec::ExactPosteriorMean => post.mean_into(out),
            EstimatorSpec::Biased { bias } => {
                post.mean_into(out);
                for (o, b) in out.iter_mut().zip(bias) {
                    *o += b;
                }
            }
            EstimatorSpec::Scaled { factor } => {
                post.mean_into(out);
                for o in out.iter_mut() {
                    *o *= factor;
                }
            }
            EstimatorSpec::Zero => out.fill(0.0),
        }
    }

    /// Whether the drift needs the posterior at all.
    pub(crate) fn needs_posterior(&self) -> bool {
        !matches!(self, EstimatorSpec::Zero)
    }
}

/// `f(y, t)` for the given spec.
pub fn evaluate_estimator(
    model: &TargetModel,
    spec: &EstimatorSpec,
    y: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    spec.validate(model)?;
    let post = model.posterior(y, t)?;
    let mut out = vec![0.0; model.dim()];
    spec.apply(&post, &mut out);
    Ok(out)
}

impl KernelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            KernelSpec::PosteriorExact => "posterior_exact",
            KernelSpec::GaussianMatched => "gaussian_matched",
            KernelSpec::MeanOnly => "mean_only",
        }
    }

    /// Number of posterior moments the kernel reproduces exactly
    /// (`usize::MAX` for the exact posterior).
    pub fn matched_moments(&self) -> usize {
        match self {
            KernelSpec::PosteriorExact => usize::MAX,
            KernelSpec::GaussianMatched => 2,
            KernelSpec::MeanOnly => 1,
        }
    }
}

/// One draw `X̂ ~ Q(· | z, t)`.
///
/// Stream use: `posterior_exact` draws one uniform and `d` normals,
/// `gaussian_matched` draws `d` normals, `mean_only` draws nothing.
pub fn sample_kernel(
    model: &TargetModel,
    spec: KernelSpec,
    z: &[f64],
    t: f64,
    stream: &mut Stream,
) -> Result<Vec<f64>> {
    let post = model.posterior(z, t)?;
    let mut out = vec![0.0; model.dim()];
    match spec {
        KernelSpec::PosteriorExact => post.sample_into(stream, &mut out),
        KernelSpec::MeanOnly => post.mean_into(&mut out),
        KernelSpec::GaussianMatched => {
            let root = psd_sqrt(&post.covariance())?;
            let mut noise = vec![0.0; model.dim()];
            stream.fill_standard_normal(&mut noise);
            let x = DVector::from_vec(post.mean()) + root * DVector::from_vec(noise);
            out.copy_from_slice(x.as_slice());
        }
    }
    Ok(out)
}

/// Analytic mean and covariance of `Q(· | z, t)`.
pub fn kernel_moments(
    model: &TargetModel,
    spec: KernelSpec,
    z: &[f64],
    t: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let post = model.posterior(z, t)?;
    let cov = match spec {
        KernelSpec::PosteriorExact | KernelSpec::GaussianMatched => post.covariance(),
        KernelSpec::MeanOnly => DMatrix::zeros(model.dim(), model.dim()),
    };
    Ok((post.mean(), cov))
}

/// Score of the density of `a·X + σ·N` at `y`:
/// `(a·E[X | aX + σN = y] − y) / σ²`.
///
/// The conditional mean is read off the canonical observation model at
/// `t = a²/σ²` with `y' = a·y/σ²`.
pub fn tweedie_score(model: &TargetModel, y: &[f64], a: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be positive, got {sigma}")));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("signal scale"));
    }
    let s2 = sigma * sigma;
    let t = a * a / s2;
    let y_canon: Vec<f64> = y.iter().map(|v| v * a / s2).collect();
    let post = model.posterior(&y_canon, t)?;
    Ok(post
        .mean()
        .iter()
        .zip(y)
        .map(|(m, yi)| (a * m - yi) / s2)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn std_gauss() -> TargetModel {
        TargetModel::isotropic_gaussian(vec![0.0], 1.0).unwrap()
    }

    #[test]
    fn exact_estimator_gaussian() {
        let f = evaluate_estimator(&std_gauss(), &EstimatorSpec::ExactPosteriorMean, &[2.0], 1.0).unwrap();
        assert_eq!(f, vec![1.0]);
    }

    #[test]
    fn variants_transform_the_mean() {
        let m = TargetModel::two_atom();
        let (y, t) = ([0.4], 0.7);
        let mean = m.posterior_stats(&y, t).unwrap().mean[0];
        let ev = |s: EstimatorSpec| evaluate_estimator(&m, &s, &y, t).unwrap()[0];
        assert_eq!(ev(EstimatorSpec::ExactPosteriorMean), mean);
        assert_eq!(ev(EstimatorSpec::Biased { bias: vec![0.5] }), mean + 0.5);
        assert_eq!(ev(EstimatorSpec::Scaled { factor: 2.0 }), 2.0 * mean);
        assert_eq!(ev(EstimatorSpec::Zero), 0.0);
    }

    #[test]
    fn estimator_rejects_bad_inputs() {
        let m = std_gauss();
        assert!(evaluate_estimator(&m, &EstimatorSpec::ExactPosteriorMean, &[f64::NAN], 1.0).is_err());
        assert!(evaluate_estimator(&m, &EstimatorSpec::Biased { bias: vec![1.0, 2.0] }, &[0.0], 1.0).is_err());
    }

    #[test]
    fn mean_only_is_deterministic() {
        let m = TargetModel::two_atom();
        let mut s = derive_stream(3, 0);
        let before = s.key();
        let a = sample_kernel(&m, KernelSpec::MeanOnly, &[0.3], 0.5, &mut s).unwrap();
        let b = sample_kernel(&m, KernelSpec::MeanOnly, &[0.3], 0.5, &mut s).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.key(), before);
    }

    #[test]
    fn matched_kernel_moments_are_exact() {
        let m = TargetModel::two_atom();
        let stats = m.posterior_stats(&[0.8], 1.5).unwrap();
        let (mean, cov) = kernel_moments(&m, KernelSpec::GaussianMatched, &[0.8], 1.5).unwrap();
        assert_eq!(mean, stats.mean);
        assert!((cov[(0, 0)] - stats.covariance[(0, 0)]).abs() < 1e-15);
        let (_, c1) = kernel_moments(&m, KernelSpec::MeanOnly, &[0.8], 1.5).unwrap();
        assert_eq!(c1[(0, 0)], 0.0);
    }

    #[test]
    fn tweedie_gaussian_score() {
        let m = std_gauss();
        for y in [-2.0, -0.3, 0.0, 1.7] {
            let s = tweedie_score(&m, &[y], 1.0, 1.0).unwrap()[0];
            assert!((s + y / 2.0).abs() < 1e-14);
        }
        assert!(tweedie_score(&m, &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn tweedie_symmetric_zero() {
        let s = tweedie_score(&TargetModel::two_atom(), &[0.0], 0.8, 0.6).unwrap();
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn tweedie_negative_scale() {
        // a X + σN with a < 0 equals |a|(−X) + σN; the two-atom law is symmetric
        let m = TargetModel::two_atom();
        let pos = tweedie_score(&m, &[0.9], 1.3, 0.7).unwrap()[0];
        let neg = tweedie_score(&m, &[0.9], -1.3, 0.7).unwrap()[0];
        assert!((pos - neg).abs() < 1e-13);
    }
}
