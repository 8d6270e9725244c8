//! KL divergence `Δ_n` between the comparison chain and a sampler: the exact
//! three-term decomposition, the two upper bounds, pathwise Monte Carlo
//! estimates and the I-MMSE sandwich.
//!
//! With `M` the MMSE function and `I` the mutual information,
//!
//! ```text
//! Δ_n = Σ_k δ_k/2 · M(t_{k−1}) − I(t_n) + Σ_k δ_k/2 · E‖f_k(Y_{k−1}) − E[X | Y_{k−1}]‖²
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, KernelSpec};
use crate::linalg::GaussianDensity;
use crate::processes::{walk_comparison, MAX_FAILED_FRACTION};
use crate::quadrature::NormalRule;
use crate::rng::derive_stream;
use crate::schedules::{Family, Schedule, ALPHA_UNIT_TOL};
use crate::stats::mean_and_se;
use crate::targets::{IncrementDensity, Posterior, TargetModel};

/// Slack allowed on `0 ≤ Δ ≤ bound` checks.
pub const BOUND_TOL: f64 = 1e-9;

/// Slack allowed on the sandwich inequalities.
pub const SANDWICH_TOL: f64 = 1e-6;

/// Default Gauss–Hermite order per coordinate for the conditional estimator.
pub const DEFAULT_CONDITIONAL_NODES: usize = 12;

/// What replaces the posterior draw in the sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSpec {
    Drift(EstimatorSpec),
    Kernel(KernelSpec),
}

impl SamplerSpec {
    pub fn label(&self) -> String {
        match self {
            SamplerSpec::Drift(e) => e.label(),
            SamplerSpec::Kernel(k) => k.label().to_string(),
        }
    }

    fn validate(&self, model: &TargetModel) -> Result<()> {
        match self {
            SamplerSpec::Drift(e) => e.validate(model),
            SamplerSpec::Kernel(_) => Ok(()),
        }
    }
}

/// How the per-step expectation of the log-ratio is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    /// `log p_k(Y_k | Y_{k−1}) − log q_k(Y_k | Y_{k−1})` at the simulated `Y_k`.
    LogRatio,
    /// `KL(p_k(· | Y_{k−1}) ‖ q_k(· | Y_{k−1}))` by Gauss–Hermite quadrature
    /// over each posterior component, averaged over simulated `Y_{k−1}`.
    /// Same expectation, far lower variance when `Δ_n` is small.
    Conditional { nodes: usize },
}

/// Monte Carlo estimate over paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub paths_used: usize,
    pub paths_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    /// `Σ δ_k/2 · M(t_{k−1})`.
    pub mmse_riemann_term: f64,
    /// `I(X; Y_n)`.
    pub mutual_info_term: f64,
    /// `Σ δ_k/2 · E‖f_k − E[X | Y_{k−1}]‖²`.
    pub estimator_error_term: f64,
    pub delta_exact: f64,
    pub thm1_bound: f64,
    /// Only for geometric and uniform schedules with the exact estimator.
    pub thm2_bound: Option<f64>,
    pub mc_estimate: Option<McEstimate>,
    pub tv_bound: f64,
    pub paths_used: usize,
    /// Standard error carried by Monte Carlo MMSE values (zero for closed
    /// forms and quadrature).
    pub mmse_std_error: f64,
}

impl DivergenceReport {
    /// Violated invariants, as messages; empty when all hold.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let identity = self.mmse_riemann_term - self.mutual_info_term + self.estimator_error_term;
        if (identity - self.delta_exact).abs() > 1e-12 * (1.0 + identity.abs()) {
            out.push(format!("decomposition mismatch: {identity} vs {}", self.delta_exact));
        }
        let slack = BOUND_TOL + 3.0 * self.mmse_std_error;
        if self.delta_exact < -slack {
            out.push(format!("negative divergence {}", self.delta_exact));
        }
        if self.delta_exact > self.thm1_bound + slack {
            out.push(format!(
                "delta {} exceeds the max-step bound {}",
                self.delta_exact, self.thm1_bound
            ));
        }
        if let Some(b) = self.thm2_bound {
            if self.delta_exact > b + slack {
                out.push(format!("delta {} exceeds the geometric bound {b}", self.delta_exact));
            }
        }
        out
    }
}

struct MmseGrid {
    /// `M(t_{k−1})` for `k = 1..=n`.
    left: Vec<f64>,
    std_error: f64,
}

fn mmse_left_values(model: &TargetModel, schedule: &Schedule) -> Result<MmseGrid> {
    let n = schedule.steps();
    let mut left = Vec::with_capacity(n);
    let mut var = 0.0f64;
    for k in 1..=n {
        let m = model.mmse(schedule.time(k - 1))?;
        let w = schedule.delta(k) / 2.0;
        var += (w * m.std_error).powi(2);
        left.push(m.value);
    }
    if left.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("MMSE evaluation returned a non-finite value".into()));
    }
    Ok(MmseGrid {
        left,
        std_error: var.sqrt(),
    })
}

fn estimator_error_term(
    model: &TargetModel,
    schedule: &Schedule,
    estimator: &EstimatorSpec,
    left: &[f64],
) -> f64 {
    let scaled = |c: f64| -> f64 {
        // E‖E[X|Y]‖² = E‖X‖² − M
        let second = model.second_moment();
        let w = (c - 1.0).powi(2);
        schedule
            .increments()
            .iter()
            .zip(left)
            .map(|(d, m)| d / 2.0 * w * (second - m).max(0.0))
            .sum()
    };
    match estimator {
        EstimatorSpec::ExactPosteriorMean => 0.0,
        EstimatorSpec::Biased { bias } => {
            let b2: f64 = bias.iter().map(|b| b * b).sum();
            schedule.increments().iter().sum::<f64>() * b2 / 2.0
        }
        EstimatorSpec::Scaled { factor } => scaled(*factor),
        EstimatorSpec::Zero => scaled(0.0),
    }
}

/// Exact `Δ_n` and its decomposition; Monte Carlo fields are left empty.
pub fn delta_exact(
    model: &TargetModel,
    schedule: &Schedule,
    estimator: &EstimatorSpec,
) -> Result<DivergenceReport> {
    estimator.validate(model)?;
    let grid = mmse_left_values(model, schedule)?;
    let riemann: f64 = schedule
        .increments()
        .iter()
        .zip(&grid.left)
        .map(|(d, m)| d / 2.0 * m)
        .sum();
    let info = model.mutual_information(schedule.horizon())?;
    let err = estimator_error_term(model, schedule, estimator, &grid.left);
    let delta = riemann - info + err;
    let thm1 = schedule.max_increment() / 2.0 * model.trace_covariance() + err;
    let thm2 = match (estimator, schedule.family()) {
        (EstimatorSpec::ExactPosteriorMean, Family::Geometric { .. } | Family::Uniform) => {
            Some(thm2_bound(model, schedule)?)
        }
        _ => None,
    };
    Ok(DivergenceReport {
        mmse_riemann_term: riemann,
        mutual_info_term: info,
        estimator_error_term: err,
        delta_exact: delta,
        thm1_bound: thm1,
        thm2_bound: thm2,
        mc_estimate: None,
        tv_bound: pinsker_tv(delta.max(0.0))?,
        paths_used: 0,
        mmse_std_error: grid.std_error,
    })
}

/// Exact `Δ_n` for a kernel sampler where one is available: `posterior_exact`
/// gives 0, `mean_only` coincides with the exact-mean drift, and
/// `gaussian_matched` is exact on single-Gaussian targets. `None` otherwise.
pub fn kernel_delta_exact(
    model: &TargetModel,
    schedule: &Schedule,
    kernel: KernelSpec,
) -> Result<Option<f64>> {
    Ok(match kernel {
        KernelSpec::PosteriorExact => Some(0.0),
        KernelSpec::MeanOnly => {
            Some(delta_exact(model, schedule, &EstimatorSpec::ExactPosteriorMean)?.delta_exact)
        }
        KernelSpec::GaussianMatched if model.num_components() == 1 => Some(0.0),
        KernelSpec::GaussianMatched => None,
    })
}

/// `δ_max/2 · tr(cov(X))` plus the estimator error term.
pub fn thm1_bound(model: &TargetModel, schedule: &Schedule, estimator: &EstimatorSpec) -> Result<f64> {
    estimator.validate(model)?;
    let err = match estimator {
        EstimatorSpec::ExactPosteriorMean => 0.0,
        _ => {
            let grid = mmse_left_values(model, schedule)?;
            estimator_error_term(model, schedule, estimator, &grid.left)
        }
    };
    Ok(schedule.max_increment() / 2.0 * model.trace_covariance() + err)
}

/// Bound for the geometric grid `δ_{k+1} = α δ_k` with the exact estimator:
///
/// ```text
/// (α − 1) · ( T(M(0) − M(T)) / (2(α^n − 1)) + I(T) − T·M(T)/2 )
/// ```
///
/// At `α = 1` this is the limit `T(M(0) − M(T))/(2n)`.
pub fn thm2_bound(model: &TargetModel, schedule: &Schedule) -> Result<f64> {
    let alpha = match schedule.family() {
        Family::Uniform => 1.0,
        Family::Geometric { alpha } => alpha,
        Family::Explicit => {
            return Err(Error::Unsupported("the geometric bound needs a geometric or uniform grid".into()))
        }
    };
    let horizon = schedule.horizon();
    let n = schedule.steps() as f64;
    let m0 = model.mmse(0.0)?.value;
    let mt = model.mmse(horizon)?.value;
    let head = horizon * (m0 - mt) / 2.0;
    if (alpha - 1.0).abs() < ALPHA_UNIT_TOL {
        return Ok(head / n);
    }
    let l = alpha.ln();
    // (α − 1)/(α^n − 1), stable for α near 1 and for large n
    let ratio = if l > 0.0 {
        l.exp_m1() * (-n * l).exp() / (-(-n * l).exp_m1())
    } else {
        l.exp_m1() / (n * l).exp_m1()
    };
    let info = model.mutual_information(horizon)?;
    Ok(head * ratio + (alpha - 1.0) * (info - horizon * mt / 2.0))
}

/// `√(Δ/2)`.
pub fn pinsker_tv(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!("divergence must be >= 0, got {delta}")));
    }
    Ok((delta / 2.0).sqrt())
}

/// Law of the sampler's increment given the current state, for one step.
enum StepLaw {
    /// Identical to the comparison chain's increment law.
    Same,
    /// Independent coordinates `N(center_j, var)`, with `log_norm` the log
    /// normalising constant of the whole vector.
    Isotropic { center: Vec<f64>, half_precision: f64, log_norm: f64 },
    Full(GaussianDensity),
}

impl StepLaw {
    fn log_pdf(&self, v: &[f64]) -> f64 {
        match self {
            StepLaw::Same => unreachable!("handled by the caller"),
            StepLaw::Isotropic { center, half_precision, log_norm } => {
                let mut q = 0.0;
                for (x, c) in v.iter().zip(center) {
                    q += (x - c) * (x - c) * half_precision;
                }
                log_norm - q
            }
            StepLaw::Full(g) => g.log_pdf(v),
        }
    }
}

struct StepWorkspace {
    drift: Vec<f64>,
}

fn step_law(
    sampler: &SamplerSpec,
    post: &Posterior,
    delta: f64,
    ws: &mut StepWorkspace,
) -> std::result::Result<StepLaw, String> {
    let d = post.dim();
    let diagonal = |f: &[f64], extra: f64| {
        let var = delta + extra;
        StepLaw::Isotropic {
            center: f.iter().map(|m| delta * m).collect(),
            half_precision: 0.5 / var,
            // accumulated like the comparison density so identical laws cancel exactly
            log_norm: (0..d).fold(0.0, |acc, _| {
                acc - 0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln())
            }),
        }
    };
    match sampler {
        SamplerSpec::Kernel(KernelSpec::PosteriorExact) => Ok(StepLaw::Same),
        SamplerSpec::Drift(e) => {
            e.apply(post, &mut ws.drift);
            if ws.drift.iter().any(|v| !v.is_finite()) {
                return Err("estimator returned a non-finite value".into());
            }
            Ok(diagonal(&ws.drift, 0.0))
        }
        SamplerSpec::Kernel(KernelSpec::MeanOnly) => {
            post.mean_into(&mut ws.drift);
            Ok(diagonal(&ws.drift, 0.0))
        }
        SamplerSpec::Kernel(KernelSpec::GaussianMatched) => {
            post.mean_into(&mut ws.drift);
            if d == 1 {
                return Ok(diagonal(&ws.drift, delta * delta * post.trace_covariance()));
            }
            let cov = post.covariance() * (delta * delta)
                + nalgebra::DMatrix::<f64>::identity(d, d) * delta;
            let center: Vec<f64> = ws.drift.iter().map(|m| delta * m).collect();
            GaussianDensity::new(&center, &cov)
                .map(StepLaw::Full)
                .map_err(|e| e.to_string())
        }
    }
}

/// Product Gauss–Hermite nodes in `d` dimensions for a standard normal.
struct ProductRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl ProductRule {
    fn new(order: usize, dim: usize) -> Result<Self> {
        let rule = NormalRule::of_order(order)?;
        let count = order
            .checked_pow(dim as u32)
            .filter(|c| *c <= 1 << 20)
            .ok_or_else(|| Error::Unsupported(format!("{order}^{dim} quadrature nodes is too many")))?;
        let mut nodes = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rem = idx;
            let mut w = 1.0;
            for _ in 0..dim {
                let i = rem % order;
                rem /= order;
                nodes.push(rule.nodes[i]);
                w *= rule.weights[i];
            }
            weights.push(w);
        }
        Ok(Self { nodes, weights, dim })
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }
}

/// `KL(p ‖ q)` for the increment laws at one step, by quadrature over each
/// component of `p`.
fn conditional_step_kl(
    p: &mut IncrementDensity,
    weights: &[f64],
    q: &StepLaw,
    rule: &ProductRule,
    v: &mut [f64],
) -> f64 {
    let d = v.len();
    let mut total = 0.0;
    for i in 0..p.num_components() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for a in 0..rule.len() {
            let z = rule.node(a);
            for j in 0..d {
                let c = p.component_center(i)[j];
                let s = p.component_var(i)[j].sqrt();
                v[j] = c + s * z[j];
            }
            let lp = p.log_pdf(v);
            let lq = q.log_pdf(v);
            inner += rule.weights[a] * (lp - lq);
        }
        total += w * inner;
    }
    total
}

/// Per-path estimate of `Δ_n` from the comparison chain on stream
/// `(master_seed, path)`.
fn path_contribution(
    model: &TargetModel,
    schedule: &Schedule,
    sampler: &SamplerSpec,
    method: KlMethod,
    rule: Option<&ProductRule>,
    master_seed: u64,
    path: usize,
) -> std::result::Result<f64, String> {
    let d = model.dim();
    let mut stream = derive_stream(master_seed, path as u64);
    let mut post = model.posterior_workspace();
    let mut dens = IncrementDensity::default();
    let mut ws = StepWorkspace { drift: vec![0.0; d] };
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut total = 0.0;
    let mut failure: Option<String> = None;
    walk_comparison(model, schedule, &mut stream, &mut x, |k, prev, next| {
        if failure.is_some() {
            return;
        }
        let dk = schedule.delta(k);
        model.update_posterior(prev, schedule.time(k - 1), &mut post);
        let q = match step_law(sampler, &post, dk, &mut ws) {
            Ok(q) => q,
            Err(e) => {
                failure = Some(format!("step {k}: {e}"));
                return;
            }
        };
        if matches!(q, StepLaw::Same) {
            return;
        }
        dens.update(&post, dk);
        let term = match method {
            KlMethod::LogRatio => {
                for j in 0..d {
                    v[j] = next[j] - prev[j];
                }
                dens.log_pdf(&v) - q.log_pdf(&v)
            }
            KlMethod::Conditional { .. } => {
                conditional_step_kl(&mut dens, post.weights(), &q, rule.expect("rule built"), &mut v)
            }
        };
        if !term.is_finite() {
            failure = Some(format!("step {k}: non-finite log-ratio"));
            return;
        }
        total += term;
    });
    match failure {
        Some(reason) => Err(reason),
        None => Ok(total),
    }
}

/// Monte Carlo estimate of `Δ_n` along simulated comparison paths, using the
/// plain pathwise log-ratio.
pub fn pathwise_kl_estimate(
    model: &TargetModel,
    schedule: &Schedule,
    sampler: &SamplerSpec,
    paths: usize,
    master_seed: u64,
) -> Result<McEstimate> {
    kl_estimate(model, schedule, sampler, KlMethod::LogRatio, paths, master_seed)
}

/// Monte Carlo estimate of `Δ_n` with the given per-step method. Path `p`
/// reads stream `(master_seed, p)`; failed paths are dropped and counted.
pub fn kl_estimate(
    model: &TargetModel,
    schedule: &Schedule,
    sampler: &SamplerSpec,
    method: KlMethod,
    paths: usize,
    master_seed: u64,
) -> Result<McEstimate> {
    sampler.validate(model)?;
    if paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths for a standard error".into()));
    }
    let rule = match method {
        KlMethod::LogRatio => None,
        KlMethod::Conditional { nodes } => Some(ProductRule::new(nodes, model.dim())?),
    };
    let results: Vec<std::result::Result<f64, String>> = (0..paths)
        .into_par_iter()
        .map(|p| path_contribution(model, schedule, sampler, method, rule.as_ref(), master_seed, p))
        .collect();
    let mut values = Vec::with_capacity(paths);
    let mut failed = Vec::new();
    for (p, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(reason) => failed.push((p, reason)),
        }
    }
    if failed.len() as f64 > MAX_FAILED_FRACTION * paths as f64 {
        let (first_path, first_reason) = failed.swap_remove(0);
        return Err(Error::PathFailures {
            failed: failed.len() + 1,
            total: paths,
            first_path,
            first_reason,
        });
    }
    let est = mean_and_se(&values);
    Ok(McEstimate {
        estimate: est.mean,
        std_error: est.std_error,
        paths_used: est.count,
        paths_failed: failed.len(),
    })
}

/// `(k, δ_k/2 · M(t_k), I(t_k) − I(t_{k−1}), δ_k/2 · M(t_{k−1}))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichRow {
    pub k: usize,
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    pub violated: bool,
}

pub fn sandwich_check(model: &TargetModel, schedule: &Schedule) -> Result<Vec<SandwichRow>> {
    let increments = model.mutual_information_increments(schedule.times())?;
    let mut m_prev = model.mmse(0.0)?.value;
    let mut rows = Vec::with_capacity(schedule.steps());
    for k in 1..=schedule.steps() {
        let m_next = model.mmse(schedule.time(k))?.value;
        let half = schedule.delta(k) / 2.0;
        let (lower, mid, upper) = (half * m_next, increments[k - 1], half * m_prev);
        rows.push(SandwichRow {
            k,
            lower,
            mid,
            upper,
            violated: mid < lower - SANDWICH_TOL || mid > upper + SANDWICH_TOL,
        });
        m_prev = m_next;
    }
    Ok(rows)
}

/// Areas behind the Riemann picture of `Δ_n`, with plot samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Data {
    /// `Σ δ_k M(t_{k−1})`.
    pub riemann_area: f64,
    /// `∫_0^T M = 2 I(T)`.
    pub info_area: f64,
    /// `riemann_area − info_area = 2 Δ_n`.
    pub gap_area: f64,
    /// `(t, M(t))` on a fine grid over `[0, T]`.
    pub curve: Vec<(f64, f64)>,
    /// Corners of the left step function `t ↦ M(t_{k−1})` on `[t_{k−1}, t_k)`.
    pub steps: Vec<(f64, f64)>,
}

pub fn figure1_decomposition(
    model: &TargetModel,
    schedule: &Schedule,
    curve_samples: usize,
) -> Result<Figure1Data> {
    if curve_samples < 2 {
        return Err(Error::InvalidArgument("need at least two curve samples".into()));
    }
    let grid = mmse_left_values(model, schedule)?;
    let riemann: f64 = schedule
        .increments()
        .iter()
        .zip(&grid.left)
        .map(|(d, m)| d * m)
        .sum();
    let horizon = schedule.horizon();
    let info_area = 2.0 * model.mutual_information(horizon)?;
    let curve = (0..curve_samples)
        .map(|i| {
            let t = horizon * i as f64 / (curve_samples - 1) as f64;
            model.mmse(t).map(|m| (t, m.value))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::with_capacity(2 * schedule.steps());
    for k in 1..=schedule.steps() {
        let m = grid.left[k - 1];
        steps.push((schedule.time(k - 1), m));
        steps.push((schedule.time(k), m));
    }
    Ok(Figure1Data {
        riemann_area: riemann,
        info_area,
        gap_area: riemann - info_area,
        curve,
        steps,
    })
}
