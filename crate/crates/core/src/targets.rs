//! Target distributions with exact posterior statistics under the
//! observation model `Y(t) = t·X + √t·N`.
//!
//! Every shipped family is a finite mixture of Gaussians with diagonal
//! covariance, where an atom is a component of zero variance. The posterior
//! of such a mixture given `Y(t) = y` is again a mixture of the same shape,
//! so conditional means, covariances, exact posterior draws and transition
//! densities all reduce to per-component Gaussian algebra:
//!
//! ```text
//! component i, coordinate j, prior N(m, v):
//!   posterior variance   v / (1 + t v)
//!   posterior mean       (m + v y) / (1 + t v)
//!   evidence             N(y; t m, t² v + t)
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{clamp_psd, log_det_spd, log_normal_1d, log_sum_exp};
use crate::quadrature::{adaptive_simpson, NormalRule};
use crate::rng::{Role, Stream, StreamKey};

const WEIGHT_TOL: f64 = 1e-12;

/// Family and parameters of a target distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    IsotropicGaussian {
        mean: Vec<f64>,
        variance: f64,
    },
    DiagonalGaussian {
        mean: Vec<f64>,
        variances: Vec<f64>,
    },
    /// Mixture of isotropic Gaussian components.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
    },
    AtomMixture {
        weights: Vec<f64>,
        atoms: Vec<Vec<f64>>,
    },
}

/// Numerical settings for quantities without closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss–Hermite order for one-dimensional mixtures.
    pub gh_order: usize,
    /// Absolute tolerance of the adaptive Simpson rule for `I(s)`.
    pub simpson_tol: f64,
    /// Sample count for the Monte Carlo MMSE in dimension > 1.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            gh_order: 64,
            simpson_tol: 1e-8,
            mc_samples: 200_000,
            mc_seed: 0x5eed_0f_1f0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    weight: f64,
    log_weight: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// A validated target distribution μ on R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    kind: TargetKind,
    dim: usize,
    components: Vec<Component>,
    quad: QuadratureConfig,
}

/// Conditional mean and covariance of X given `Y(t) = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Posterior component weights; `None` for single-Gaussian targets.
    pub responsibilities: Option<Vec<f64>>,
}

/// The posterior mixture at one `(y, t)`, stored flat so it can be refreshed
/// in place inside simulation loops.
#[derive(Debug, Clone, Default)]
pub struct Posterior {
    dim: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
}

/// MMSE value with the standard error of its Monte Carlo estimate (zero for
/// closed forms and quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseValue {
    pub value: f64,
    pub std_error: f64,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidModel("mixture needs at least one component".into()));
    }
    ensure_finite(weights, "mixture weights")?;
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidModel("negative mixture weight".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidModel(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

fn check_dim(dim: usize, v: &[f64], what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::InvalidModel(format!(
            "{what} has dimension {}, expected {dim}",
            v.len()
        )));
    }
    Ok(())
}

impl TargetModel {
    pub fn new(kind: TargetKind) -> Result<Self> {
        let components = match &kind {
            TargetKind::IsotropicGaussian { mean, variance } => {
                ensure_finite(mean, "mean")?;
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(Error::InvalidModel("variance must be positive".into()));
                }
                vec![(1.0, mean.clone(), vec![*variance; mean.len()])]
            }
            TargetKind::DiagonalGaussian { mean, variances } => {
                ensure_finite(mean, "mean")?;
                check_dim(mean.len(), variances, "variances")?;
                if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidModel("variances must be positive".into()));
                }
                vec![(1.0, mean.clone(), variances.clone())]
            }
            TargetKind::GaussianMixture {
                weights,
                means,
                variances,
            } => {
                check_weights(weights)?;
                if means.len() != weights.len() || variances.len() != weights.len() {
                    return Err(Error::InvalidModel(
                        "weights, means and variances must have equal length".into(),
                    ));
                }
                if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidModel("variances must be positive".into()));
                }
                let d = means.first().map_or(0, Vec::len);
                means
                    .iter()
                    .zip(variances)
                    .zip(weights)
                    .map(|((m, &v), &w)| {
                        ensure_finite(m, "component mean")?;
                        check_dim(d, m, "component mean")?;
                        Ok((w, m.clone(), vec![v; d]))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            TargetKind::AtomMixture { weights, atoms } => {
                check_weights(weights)?;
                if atoms.len() != weights.len() {
                    return Err(Error::InvalidModel(
                        "weights and atoms must have equal length".into(),
                    ));
                }
                let d = atoms.first().map_or(0, Vec::len);
                atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, &w)| {
                        ensure_finite(a, "atom")?;
                        check_dim(d, a, "atom")?;
                        Ok((w, a.clone(), vec![0.0; d]))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let dim = components[0].1.len();
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        let components = components
            .into_iter()
            .map(|(weight, mean, var)| Component {
                weight,
                log_weight: weight.ln(),
                mean,
                var,
            })
            .collect();
        Ok(Self {
            kind,
            dim,
            components,
            quad: QuadratureConfig::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig) -> Self {
        self.quad = quad;
        self
    }

    /// N(0, I) in dimension `d` scaled to the given variance.
    pub fn isotropic_gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(TargetKind::IsotropicGaussian { mean, variance })
    }

    /// The symmetric two-point law on {-1, +1} in one dimension.
    pub fn two_atom() -> Self {
        Self::new(TargetKind::AtomMixture {
            weights: vec![0.5, 0.5],
            atoms: vec![vec![-1.0], vec![1.0]],
        })
        .expect("valid two-atom model")
    }

    /// A point mass.
    pub fn point_mass(atom: Vec<f64>) -> Result<Self> {
        Self::new(TargetKind::AtomMixture {
            weights: vec![1.0],
            atoms: vec![atom],
        })
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_mixture(&self) -> bool {
        matches!(
            self.kind,
            TargetKind::GaussianMixture { .. } | TargetKind::AtomMixture { .. }
        )
    }

    /// Short label used in CSV rows.
    pub fn label(&self) -> String {
        match &self.kind {
            TargetKind::IsotropicGaussian { .. } => format!("isotropic_gaussian_d{}", self.dim),
            TargetKind::DiagonalGaussian { .. } => format!("diagonal_gaussian_d{}", self.dim),
            TargetKind::GaussianMixture { weights, .. } => {
                format!("gaussian_mixture_k{}_d{}", weights.len(), self.dim)
            }
            TargetKind::AtomMixture { weights, .. } => {
                format!("atom_mixture_k{}_d{}", weights.len(), self.dim)
            }
        }
    }

    fn is_single_gaussian(&self) -> bool {
        self.components.len() == 1
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (acc, x) in m.iter_mut().zip(&c.mean) {
                *acc += c.weight * x;
            }
        }
        m
    }

    /// `cov(X)`, assembled pairwise so that it is PSD by construction.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut cov = DMatrix::zeros(d, d);
        for c in &self.components {
            for j in 0..d {
                cov[(j, j)] += c.weight * c.var[j];
            }
        }
        for (i, a) in self.components.iter().enumerate() {
            for b in &self.components[i + 1..] {
                let w = a.weight * b.weight;
                for j in 0..d {
                    for l in 0..d {
                        cov[(j, l)] += w * (a.mean[j] - b.mean[j]) * (a.mean[l] - b.mean[l]);
                    }
                }
            }
        }
        cov
    }

    /// `tr(cov(X))`, which is also `M(0)`.
    pub fn trace_covariance(&self) -> f64 {
        self.covariance().trace()
    }

    /// `E‖X‖²`.
    pub fn second_moment(&self) -> f64 {
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * c.mean
                        .iter()
                        .zip(&c.var)
                        .map(|(m, v)| m * m + v)
                        .sum::<f64>()
            })
            .sum()
    }

    /// One draw from μ. Always consumes one uniform for the component and
    /// `d` normals, whatever the family.
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        let i = if self.components.len() == 1 {
            stream.uniform_open();
            0
        } else {
            let u = stream.uniform_open();
            let mut acc = 0.0;
            self.components
                .iter()
                .position(|c| {
                    acc += c.weight;
                    u < acc
                })
                .unwrap_or_else(|| {
                    self.components
                        .iter()
                        .rposition(|c| c.weight > 0.0)
                        .unwrap_or(0)
                })
        };
        stream.fill_standard_normal(out);
        let c = &self.components[i];
        for ((x, m), v) in out.iter_mut().zip(&c.mean).zip(&c.var) {
            *x = m + v.sqrt() * *x;
        }
    }

    pub fn sample(&self, stream: &mut Stream) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.sample_into(stream, &mut x);
        x
    }

    /// An empty posterior workspace sized for this model.
    pub fn posterior_workspace(&self) -> Posterior {
        let k = self.components.len();
        Posterior {
            dim: self.dim,
            weights: vec![0.0; k],
            log_weights: vec![0.0; k],
            means: vec![0.0; k * self.dim],
            vars: vec![0.0; k * self.dim],
        }
    }

    /// Refreshes `post` to the law of X given `Y(t) = y`. No input checks.
    pub fn update_posterior(&self, y: &[f64], t: f64, post: &mut Posterior) {
        let d = self.dim;
        // Y(0) = 0 carries no information, whatever value is passed in
        let informative = t > 0.0;
        for (i, c) in self.components.iter().enumerate() {
            let mut logw = c.log_weight;
            for j in 0..d {
                let v = c.var[j];
                let denom = 1.0 + t * v;
                let obs = if informative { y[j] } else { 0.0 };
                post.means[i * d + j] = (c.mean[j] + v * obs) / denom;
                post.vars[i * d + j] = v / denom;
                if informative && self.components.len() > 1 {
                    // evidence N(y; t m, t² v + t), constants shared across components dropped
                    let r = y[j] - t * c.mean[j];
                    let s = t * t * v + t;
                    logw -= 0.5 * (s.ln() + r * r / s);
                }
            }
            post.log_weights[i] = logw;
        }
        let norm = log_sum_exp(&post.log_weights);
        for (w, lw) in post.weights.iter_mut().zip(post.log_weights.iter_mut()) {
            *lw -= norm;
            *w = lw.exp();
        }
    }

    /// The posterior mixture at `(y, t)`.
    pub fn posterior(&self, y: &[f64], t: f64) -> Result<Posterior> {
        self.check_observation(y, t)?;
        let mut post = self.posterior_workspace();
        self.update_posterior(y, t, &mut post);
        Ok(post)
    }

    fn check_observation(&self, y: &[f64], t: f64) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "observation has dimension {}, model has {}",
                y.len(),
                self.dim
            )));
        }
        ensure_finite(y, "observation")?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
        }
        Ok(())
    }

    /// Exact conditional mean and covariance of X given `Y(t) = y`; `t = 0`
    /// gives the prior.
    pub fn posterior_stats(&self, y: &[f64], t: f64) -> Result<PosteriorStats> {
        let post = self.posterior(y, t)?;
        let covariance = clamp_psd(&post.covariance())?;
        Ok(PosteriorStats {
            mean: post.mean(),
            covariance,
            responsibilities: self.is_mixture().then(|| post.weights.clone()),
        })
    }

    /// `M(s) = E‖X − E[X | √s X + N]‖²`.
    ///
    /// Closed form for single Gaussians and point masses, Gauss–Hermite
    /// quadrature for one-dimensional mixtures, and Monte Carlo with common
    /// random numbers across `s` for mixtures in higher dimension.
    pub fn mmse(&self, s: f64) -> Result<MmseValue> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr must be finite and >= 0, got {s}")));
        }
        if self.is_single_gaussian() {
            let c = &self.components[0];
            let value = c.var.iter().map(|v| v / (1.0 + s * v)).sum();
            return Ok(MmseValue { value, std_error: 0.0 });
        }
        if s == 0.0 {
            return Ok(MmseValue {
                value: self.trace_covariance(),
                std_error: 0.0,
            });
        }
        if self.dim == 1 {
            self.mmse_quadrature(s)
        } else {
            Ok(self.mmse_monte_carlo(s))
        }
    }

    fn mmse_quadrature(&self, s: f64) -> Result<MmseValue> {
        let rule = NormalRule::of_order(self.quad.gh_order)?;
        let mut post = self.posterior_workspace();
        let mut value = 0.0;
        // observing Y(s) = s X + √s N carries the same information as √s X + N
        for c in &self.components {
            let center = s * c.mean[0];
            let sd = (s * s * c.var[0] + s).sqrt();
            let inner = rule.expect(center, sd, |y| {
                self.update_posterior(&[y], s, &mut post);
                post.trace_covariance()
            });
            value += c.weight * inner;
        }
        Ok(MmseValue { value, std_error: 0.0 })
    }

    fn mmse_monte_carlo(&self, s: f64) -> MmseValue {
        let mut stream = Stream::from_key(StreamKey::for_role(self.quad.mc_seed, Role::MmseMonteCarlo));
        let mut post = self.posterior_workspace();
        let mut x = vec![0.0; self.dim];
        let mut noise = vec![0.0; self.dim];
        let mut y = vec![0.0; self.dim];
        let n = self.quad.mc_samples.max(2);
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            self.sample_into(&mut stream, &mut x);
            stream.fill_standard_normal(&mut noise);
            for j in 0..self.dim {
                y[j] = s * x[j] + s.sqrt() * noise[j];
            }
            self.update_posterior(&y, s, &mut post);
            // Rao–Blackwellised: E[‖X − E[X|Y]‖² | Y] = tr cov(X | Y)
            let v = post.trace_covariance();
            sum += v;
            sumsq += v * v;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sumsq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        MmseValue {
            value: mean,
            std_error: (var / nf).sqrt(),
        }
    }

    fn mmse_value(&self, s: f64) -> f64 {
        self.mmse(s).map(|m| m.value).unwrap_or(f64::NAN)
    }

    /// `I(a, b) = I(b) − I(a) = ½∫_a^b M(u) du`.
    pub fn mutual_information_between(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 0 <= a <= b, got [{a}, {b}]")));
        }
        if self.is_single_gaussian() {
            let c = &self.components[0];
            return Ok(c
                .var
                .iter()
                .map(|v| 0.5 * ((b - a) * v / (1.0 + a * v)).ln_1p())
                .sum());
        }
        let (value, _) = adaptive_simpson(|u| 0.5 * self.mmse_value(u), a, b, self.quad.simpson_tol)?;
        if !value.is_finite() {
            return Err(Error::Numerical("MMSE quadrature produced a non-finite value".into()));
        }
        Ok(value)
    }

    /// `I(s) = I(X; √s X + N)` in nats.
    pub fn mutual_information(&self, s: f64) -> Result<f64> {
        self.mutual_information_between(0.0, s)
    }

    /// `I(t_k) − I(t_{k−1})` for consecutive grid points.
    pub fn mutual_information_increments(&self, times: &[f64]) -> Result<Vec<f64>> {
        times
            .windows(2)
            .map(|w| self.mutual_information_between(w[0], w[1]))
            .collect()
    }

    /// `½ log det(I + s·cov(X))`, the Gaussian upper bound on `I(s)`.
    pub fn gaussian_information_bound(&self, s: f64) -> Result<f64> {
        let m = DMatrix::identity(self.dim, self.dim) + self.covariance() * s;
        Ok(0.5 * log_det_spd(&m)?)
    }

    /// `log p(y_next | y_prev)` for one step of the comparison chain started
    /// at time `t_prev` with increment `delta`.
    pub fn log_transition_density(
        &self,
        y_prev: &[f64],
        y_next: &[f64],
        t_prev: f64,
        delta: f64,
    ) -> Result<f64> {
        self.check_observation(y_prev, t_prev)?;
        if y_next.len() != self.dim {
            return Err(Error::InvalidArgument("y_next has the wrong dimension".into()));
        }
        ensure_finite(y_next, "y_next")?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {delta}")));
        }
        let post = self.posterior(y_prev, t_prev)?;
        let v: Vec<f64> = y_next.iter().zip(y_prev).map(|(a, b)| a - b).collect();
        Ok(post.log_increment_density(&v, delta))
    }

    /// Log-density of `a·X + σ·N` at `y`.
    pub fn log_marginal_density(&self, y: &[f64], a: f64, sigma: f64) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::InvalidArgument("y has the wrong dimension".into()));
        }
        ensure_finite(y, "y")?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                c.log_weight
                    + (0..self.dim)
                        .map(|j| log_normal_1d(y[j], a * c.mean[j], a * a * c.var[j] + sigma * sigma))
                        .sum::<f64>()
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Smallest `L` (up to bisection accuracy, rounded up) with
    /// `∫ exp(‖x‖²/L²) μ(dx) ≤ 2`, evaluated in closed form per component.
    pub fn sub_gaussian_constant(&self) -> f64 {
        let mgf = |l2: f64| -> f64 {
            self.components
                .iter()
                .map(|c| {
                    c.weight
                        * c.mean
                            .iter()
                            .zip(&c.var)
                            .map(|(m, v)| {
                                let r = l2 - 2.0 * v;
                                if r <= 0.0 {
                                    f64::INFINITY
                                } else {
                                    (l2 / r).sqrt() * (m * m / r).exp()
                                }
                            })
                            .product::<f64>()
                })
                .sum()
        };
        let vmax = self
            .components
            .iter()
            .flat_map(|c| c.var.iter().copied())
            .fold(0.0, f64::max);
        let mut lo = 2.0 * vmax;
        let mut hi = (lo * 2.0).max(1.0);
        while mgf(hi) > 2.0 {
            lo = hi;
            hi *= 2.0;
        }
        if mgf(lo.max(f64::MIN_POSITIVE)) <= 2.0 {
            return lo.max(f64::MIN_POSITIVE).sqrt();
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mgf(mid) > 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi.sqrt()
    }
}

impl Posterior {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component_mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component_var(&self, i: usize) -> &[f64] {
        &self.vars[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean_into(&self, out: &mut [f64]) {
        out.fill(0.0);
        for (i, w) in self.weights.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(self.component_mean(i)) {
                *o += w * m;
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        self.mean_into(&mut m);
        m
    }

    /// Covariance as `Σ r_i S_i + Σ_{i<l} r_i r_l (μ_i − μ_l)(μ_i − μ_l)ᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut cov = DMatrix::zeros(d, d);
        let k = self.weights.len();
        for i in 0..k {
            for j in 0..d {
                cov[(j, j)] += self.weights[i] * self.vars[i * d + j];
            }
        }
        for i in 0..k {
            for l in i + 1..k {
                let w = self.weights[i] * self.weights[l];
                if w == 0.0 {
                    continue;
                }
                let (a, b) = (self.component_mean(i), self.component_mean(l));
                for j in 0..d {
                    for m in 0..d {
                        cov[(j, m)] += w * (a[j] - b[j]) * (a[m] - b[m]);
                    }
                }
            }
        }
        cov
    }

    /// `tr cov(X | Y)` without forming the matrix.
    pub fn trace_covariance(&self) -> f64 {
        let d = self.dim;
        let k = self.weights.len();
        let mut tr = 0.0;
        for i in 0..k {
            tr += self.weights[i] * self.component_var(i).iter().sum::<f64>();
            for l in i + 1..k {
                let w = self.weights[i] * self.weights[l];
                if w == 0.0 {
                    continue;
                }
                let (a, b) = (self.component_mean(i), self.component_mean(l));
                tr += w * (0..d).map(|j| (a[j] - b[j]).powi(2)).sum::<f64>();
            }
        }
        tr
    }

    /// Exact draw from the posterior mixture: one uniform for the component,
    /// then `d` normals.
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        let i = stream.categorical(&self.weights);
        stream.fill_standard_normal(out);
        for ((x, m), v) in out.iter_mut().zip(self.component_mean(i)).zip(self.component_var(i)) {
            *x = m + v.sqrt() * *x;
        }
    }

    /// Log-density of the increment `V = δ X' + √δ N`, `X'` drawn from this
    /// posterior.
    pub fn log_increment_density(&self, v: &[f64], delta: f64) -> f64 {
        let mut dens = IncrementDensity::default();
        dens.update(self, delta);
        dens.log_pdf(v)
    }
}

/// Law of the increment `V = δ X' + √δ N` with `X'` from a posterior: a
/// Gaussian mixture with per-component means `δ μ_i` and variances
/// `δ² s_i + δ`. Refreshed in place once per step.
#[derive(Debug, Clone, Default)]
pub struct IncrementDensity {
    dim: usize,
    log_consts: Vec<f64>,
    centers: Vec<f64>,
    vars: Vec<f64>,
    half_precisions: Vec<f64>,
    scratch: Vec<f64>,
}

impl IncrementDensity {
    pub fn update(&mut self, post: &Posterior, delta: f64) {
        let d = post.dim;
        let k = post.weights.len();
        self.dim = d;
        self.log_consts.resize(k, 0.0);
        self.centers.resize(k * d, 0.0);
        self.vars.resize(k * d, 0.0);
        self.half_precisions.resize(k * d, 0.0);
        self.scratch.resize(k, 0.0);
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        for i in 0..k {
            let mut c = post.log_weights[i];
            for j in 0..d {
                let var = delta * delta * post.vars[i * d + j] + delta;
                self.centers[i * d + j] = delta * post.means[i * d + j];
                self.vars[i * d + j] = var;
                self.half_precisions[i * d + j] = 0.5 / var;
                c -= 0.5 * (ln_2pi + var.ln());
            }
            self.log_consts[i] = c;
        }
    }

    pub fn num_components(&self) -> usize {
        self.log_consts.len()
    }

    pub fn component_center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component_var(&self, i: usize) -> &[f64] {
        &self.vars[i * self.dim..(i + 1) * self.dim]
    }

    pub fn log_pdf(&mut self, v: &[f64]) -> f64 {
        let d = self.dim;
        for i in 0..self.log_consts.len() {
            let c = self.log_consts[i];
            if c == f64::NEG_INFINITY {
                self.scratch[i] = c;
                continue;
            }
            let mut q = 0.0;
            for j in 0..d {
                let r = v[j] - self.centers[i * d + j];
                q += r * r * self.half_precisions[i * d + j];
            }
            self.scratch[i] = c - q;
        }
        log_sum_exp(&self.scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn std_gauss() -> TargetModel {
        TargetModel::isotropic_gaussian(vec![0.0], 1.0).unwrap()
    }

    fn bimodal() -> TargetModel {
        TargetModel::new(TargetKind::GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-2.0], vec![2.0]],
            variances: vec![0.25, 0.25],
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_models() {
        let bad_weights = TargetKind::AtomMixture {
            weights: vec![0.5, 0.6],
            atoms: vec![vec![0.0], vec![1.0]],
        };
        assert!(TargetModel::new(bad_weights).is_err());
        let neg = TargetKind::AtomMixture {
            weights: vec![1.5, -0.5],
            atoms: vec![vec![0.0], vec![1.0]],
        };
        assert!(TargetModel::new(neg).is_err());
        assert!(TargetModel::isotropic_gaussian(vec![0.0], 0.0).is_err());
        let ragged = TargetKind::AtomMixture {
            weights: vec![0.5, 0.5],
            atoms: vec![vec![0.0], vec![1.0, 2.0]],
        };
        assert!(TargetModel::new(ragged).is_err());
        assert!(TargetModel::isotropic_gaussian(vec![], 1.0).is_err());
    }

    #[test]
    fn gaussian_posterior_conjugacy() {
        let s = std_gauss().posterior_stats(&[2.0], 1.0).unwrap();
        assert!((s.mean[0] - 1.0).abs() < 1e-15);
        assert!((s.covariance[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(s.responsibilities.is_none());
    }

    #[test]
    fn time_zero_is_prior() {
        let m = bimodal();
        let s = m.posterior_stats(&[3.7], 0.0).unwrap();
        assert!(s.mean[0].abs() < 1e-15);
        assert!((s.covariance[(0, 0)] - 4.25).abs() < 1e-12);
        assert_eq!(s.responsibilities.unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn two_atom_posterior_is_tanh() {
        // brute-force Bayes with likelihood N(y; t a, t)
        let (t, y) = (4.0, 4.0);
        let lik = |a: f64| (-(y - t * a) * (y - t * a) / (2.0 * t)).exp();
        let (lp, lm) = (0.5 * lik(1.0), 0.5 * lik(-1.0));
        let brute = (lp - lm) / (lp + lm);
        let s = TargetModel::two_atom().posterior_stats(&[y], t).unwrap();
        assert!((s.mean[0] - brute).abs() < 1e-14);
        assert!((s.mean[0] - y.tanh()).abs() < 1e-14);
        assert!((s.covariance[(0, 0)] - (1.0 - brute * brute)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_observation_rejected() {
        assert!(std_gauss().posterior_stats(&[f64::NAN], 1.0).is_err());
        assert!(std_gauss().posterior_stats(&[1.0], -1.0).is_err());
    }

    #[test]
    fn gaussian_mmse_and_information() {
        let m = std_gauss();
        assert!((m.mmse(1.0).unwrap().value - 0.5).abs() < 1e-15);
        assert!((m.mutual_information(1.0).unwrap() - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn point_mass_has_no_information() {
        let m = TargetModel::point_mass(vec![1.5, -0.5]).unwrap();
        for s in [0.0, 0.3, 5.0] {
            assert_eq!(m.mmse(s).unwrap().value, 0.0);
            assert_eq!(m.mutual_information(s).unwrap(), 0.0);
        }
        let mut st = derive_stream(1, 1);
        assert_eq!(m.sample(&mut st), vec![1.5, -0.5]);
    }

    #[test]
    fn mixture_mmse_starts_at_trace() {
        let m = bimodal();
        assert!((m.mmse(0.0).unwrap().value - 4.25).abs() < 1e-12);
        // continuity at the origin of the quadrature branch
        assert!((m.mmse(1e-9).unwrap().value - 4.25).abs() < 1e-6);
    }

    #[test]
    fn gaussian_transition_density_closed_form() {
        let lp = std_gauss().log_transition_density(&[0.0], &[0.0], 0.0, 1.0).unwrap();
        assert!((lp + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn atom_transition_density_is_shifted_kernel() {
        let a = 0.7;
        let m = TargetModel::point_mass(vec![a]).unwrap();
        let (yp, yn, t, dl) = (0.3, 1.1, 0.8, 0.25);
        let lp = m.log_transition_density(&[yp], &[yn], t, dl).unwrap();
        let expect = log_normal_1d(yn - yp - dl * a, 0.0, dl);
        assert!((lp - expect).abs() < 1e-14);
    }

    #[test]
    fn transition_density_rejects_bad_step() {
        assert!(std_gauss().log_transition_density(&[0.0], &[0.0], 0.0, 0.0).is_err());
        assert!(std_gauss().log_transition_density(&[0.0], &[f64::INFINITY], 0.0, 1.0).is_err());
    }

    #[test]
    fn sub_gaussian_constants() {
        let l = TargetModel::two_atom().sub_gaussian_constant();
        // atoms at ±1: exp(1/L²) = 2
        assert!((l * l - 1.0 / 2f64.ln()).abs() < 1e-9);
        let g = std_gauss().sub_gaussian_constant();
        // (1 − 2/L²)^{-1/2} = 2  →  L² = 8/3
        assert!((g * g - 8.0 / 3.0).abs() < 1e-9);
        assert!(bimodal().sub_gaussian_constant().is_finite());
    }

    #[test]
    fn covariance_of_mixture() {
        let c = bimodal().covariance();
        assert!((c[(0, 0)] - 4.25).abs() < 1e-14);
        let m3 = TargetModel::new(TargetKind::AtomMixture {
            weights: vec![0.2, 0.3, 0.5],
            atoms: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![-1.0, 2.0]],
        })
        .unwrap();
        // direct E[XXᵀ] − E[X]E[X]ᵀ
        let mean = m3.mean();
        let atoms = [[0.0, 1.0], [1.0, 0.0], [-1.0, 2.0]];
        let w = [0.2, 0.3, 0.5];
        let cov = m3.covariance();
        for j in 0..2 {
            for l in 0..2 {
                let e: f64 = (0..3).map(|i| w[i] * atoms[i][j] * atoms[i][l]).sum();
                assert!((cov[(j, l)] - (e - mean[j] * mean[l])).abs() < 1e-14);
            }
        }
    }
}
