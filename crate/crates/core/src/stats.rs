//! Sample statistics used by the diagnostics: means with standard errors,
//! weighted log-log fits and a block energy-distance two-sample test.

use crate::error::{Error, Result};

/// Mean and standard error of i.i.d. values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

pub fn mean_and_se(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            count: 0,
        };
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_error: (var / nf).sqrt(),
        count: n,
    }
}

/// Sample covariance of paired values with the standard error of the mean
/// of centred products.
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> MeanEstimate {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    mean_and_se(&products)
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Least-squares fit of `log y = intercept + slope · log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (from the supplied per-point errors when
    /// given, otherwise from the residuals).
    pub slope_se: f64,
    /// 95% normal interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Weighted log-log regression. `rel_errors[i]` is the relative standard
/// error of `y[i]` (so the log-scale error); pass `None` for an ordinary fit.
pub fn log_log_fit(x: &[f64], y: &[f64], rel_errors: Option<&[f64]>) -> Result<SlopeFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points for a fit".into()));
    }
    if y.iter().chain(x).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Numerical(
            "log-log fit needs positive finite values; estimates are too noisy".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let weights: Vec<f64> = match rel_errors {
        Some(e) => e
            .iter()
            .map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1e30 })
            .collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = weights.iter().sum();
    let mx = weights.iter().zip(&lx).map(|(w, v)| w * v).sum::<f64>() / sw;
    let my = weights.iter().zip(&ly).map(|(w, v)| w * v).sum::<f64>() / sw;
    let sxx: f64 = weights.iter().zip(&lx).map(|(w, v)| w * (v - mx).powi(2)).sum();
    let sxy: f64 = weights
        .iter()
        .zip(lx.iter().zip(&ly))
        .map(|(w, (a, b))| w * (a - mx) * (b - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if rel_errors.is_some() {
        (1.0 / sxx).sqrt()
    } else if x.len() > 2 {
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (x.len() as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        ci_low: slope - 1.96 * slope_se,
        ci_high: slope + 1.96 * slope_se,
    })
}

/// Outcome of the block energy-distance test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTest {
    /// Mean of the per-block unbiased energy statistics.
    pub statistic: f64,
    pub z: f64,
    /// One-sided p-value from the normal approximation over blocks.
    pub p_value: f64,
    pub blocks: usize,
}

impl EnergyTest {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Two-sample energy-distance test on row-major samples of dimension `dim`.
///
/// Both samples are cut into consecutive blocks of `block` rows. Inside each
/// block the unbiased energy statistic
///
/// ```text
/// 2/b² Σ_ij ‖x_i − y_j‖ − 1/(b(b−1)) Σ_{i≠j} ‖x_i − x_j‖ − 1/(b(b−1)) Σ_{i≠j} ‖y_i − y_j‖
/// ```
///
/// has mean zero under equality of laws; blocks are independent, so their
/// average is compared with a normal reference. Quadratic work is confined
/// to blocks, which keeps 10⁵-sample tests linear in the sample size.
pub fn energy_two_sample_test(x: &[f64], y: &[f64], dim: usize, block: usize) -> Result<EnergyTest> {
    if dim == 0 || x.len() % dim != 0 || y.len() % dim != 0 {
        return Err(Error::InvalidArgument("sample length not a multiple of dimension".into()));
    }
    if block < 2 {
        return Err(Error::InvalidArgument("block size must be at least 2".into()));
    }
    let n = (x.len() / dim).min(y.len() / dim);
    let blocks = n / block;
    if blocks < 2 {
        return Err(Error::InvalidArgument("need at least two full blocks".into()));
    }
    let row = |s: &[f64], i: usize| -> Vec<f64> { s[i * dim..(i + 1) * dim].to_vec() };
    let b = block as f64;
    let stats: Vec<f64> = (0..blocks)
        .map(|blk| {
            let xs: Vec<Vec<f64>> = (0..block).map(|i| row(x, blk * block + i)).collect();
            let ys: Vec<Vec<f64>> = (0..block).map(|i| row(y, blk * block + i)).collect();
            let mut cross = 0.0;
            for xi in &xs {
                for yj in &ys {
                    cross += dist(xi, yj);
                }
            }
            let mut within_x = 0.0;
            let mut within_y = 0.0;
            for i in 0..block {
                for j in i + 1..block {
                    within_x += dist(&xs[i], &xs[j]);
                    within_y += dist(&ys[i], &ys[j]);
                }
            }
            2.0 * cross / (b * b) - 2.0 * (within_x + within_y) / (b * (b - 1.0))
        })
        .collect();
    let est = mean_and_se(&stats);
    let z = if est.std_error > 0.0 {
        est.mean / est.std_error
    } else {
        0.0
    };
    Ok(EnergyTest {
        statistic: est.mean,
        z,
        p_value: normal_upper_tail(z),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn mean_se_basic() {
        let m = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_power_law_fit() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.0)).collect();
        let fit = log_log_fit(&x, &y, None).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(log_log_fit(&x, &[1.0, -1.0, 1.0, 1.0], None).is_err());
    }

    #[test]
    fn tail_probability() {
        assert!((normal_upper_tail(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_upper_tail(3.090_232_306) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn energy_test_detects_shift_and_accepts_equal() {
        let mut s = derive_stream(9, 0);
        let n = 4000;
        let mut draw = |shift: f64| -> Vec<f64> {
            (0..n).map(|_| s.standard_normal() + shift).collect()
        };
        let a = draw(0.0);
        let b = draw(0.0);
        let c = draw(0.3);
        let same = energy_two_sample_test(&a, &b, 1, 100).unwrap();
        let diff = energy_two_sample_test(&a, &c, 1, 100).unwrap();
        assert!(!same.rejects(1e-3), "{same:?}");
        assert!(diff.rejects(1e-3), "{diff:?}");
    }
}
