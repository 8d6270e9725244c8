//! Experiment runners behind the command-line tool. Each runner turns a
//! [`RunConfig`] into an in-memory [`ExperimentOutput`]; [`write_outputs`]
//! persists it next to a manifest.
//!
//! Exit codes: 0 all checks pass, 2 invariant or bound violation, 3 config
//! error, 4 numerical failure.

pub mod config;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::divergence::{
    delta_exact, figure1_decomposition, kernel_delta_exact, kl_estimate, pinsker_tv, thm2_bound,
    McEstimate, SamplerSpec, BOUND_TOL, SANDWICH_TOL,
};
use crate::error::{Error, Result};
use crate::estimators::{tweedie_score, EstimatorSpec, KernelSpec};
use crate::linalg::EIGEN_CLAMP;
use crate::processes::{reverse_diagnostics, simulate_comparison, SimulationConfig, MAX_FAILED_FRACTION};
use crate::schedules::{corollary_alpha, ALPHA_UNIT_TOL};
use crate::stats::log_log_fit;
use crate::targets::QuadratureConfig;

pub use config::{ExperimentKind, KlMethodSpec, RunConfig, ScheduleFamilySpec, ScheduleSpec, SweepSpec};
use svg::{Plot, Scale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// `|z|` above this flags a reverse-time dependence or variance mismatch.
pub const REVERSE_Z_LIMIT: f64 = 4.0;

/// Largest relative standard error accepted at the largest `n` of a
/// Monte Carlo rate study.
pub const RATE_MAX_REL_SE: f64 = 0.1;

/// Everything an experiment produced, before it touches the disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    /// Contents of `results.csv`.
    pub csv: String,
    /// Additional `(file name, contents)` pairs.
    pub extra_files: Vec<(String, String)>,
    pub summary: Value,
    pub violations: Vec<String>,
}

impl ExperimentOutput {
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    }
}

pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::PathFailures { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Shortest round-trip decimal form; empty for `None`.
fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn run_experiment(kind: ExperimentKind, cfg: &RunConfig) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::Divergence => run_divergence(cfg),
        ExperimentKind::RateStudy => run_rate_study(cfg),
        ExperimentKind::ScheduleSweep => run_schedule_sweep(cfg),
        ExperimentKind::ReverseCheck => run_reverse_check(cfg),
        ExperimentKind::TweedieCheck => run_tweedie_check(cfg),
        ExperimentKind::Figure1 => run_figure1(cfg),
    }
}

struct DivergenceRow {
    cells: Vec<String>,
    violations: Vec<String>,
    detail: Value,
}

/// Exact divergence, bounds and (optionally) a Monte Carlo estimate for every
/// grid point `target × T × α × n × sampler`.
pub fn run_divergence(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let horizons = cfg.sweep.horizon.clone().unwrap_or_else(|| vec![cfg.schedule.horizon]);
    let alphas: Vec<Option<f64>> = match &cfg.sweep.alpha {
        Some(a) => a.iter().map(|x| Some(*x)).collect(),
        None => vec![None],
    };
    let ns = cfg.sweep.n.clone().unwrap_or_else(|| vec![cfg.schedule.n]);
    let mut grid = Vec::new();
    for target in cfg.targets() {
        for &t in &horizons {
            for &a in &alphas {
                for &n in &ns {
                    for s in cfg.samplers() {
                        grid.push((target.clone(), cfg.schedule.with(t, n, a), s));
                    }
                }
            }
        }
    }
    let monte_carlo = cfg.monte_carlo.unwrap_or(true);
    let method = cfg.kl_method.unwrap_or_default();
    let paths = cfg.paths()?;
    let rows: Vec<DivergenceRow> = grid
        .par_iter()
        .map(|(target, spec, sampler)| -> Result<DivergenceRow> {
            let model = cfg.model(target)?;
            let schedule = spec.build()?;
            let exact_report = match sampler {
                SamplerSpec::Drift(e) => Some(delta_exact(&model, &schedule, e)?),
                SamplerSpec::Kernel(KernelSpec::MeanOnly) => {
                    Some(delta_exact(&model, &schedule, &EstimatorSpec::ExactPosteriorMean)?)
                }
                SamplerSpec::Kernel(_) => None,
            };
            let exact = match (&exact_report, sampler) {
                (Some(r), _) => Some(r.delta_exact),
                (None, SamplerSpec::Kernel(k)) => kernel_delta_exact(&model, &schedule, *k)?,
                (None, SamplerSpec::Drift(_)) => None,
            };
            let mc: Option<McEstimate> = if monte_carlo {
                Some(kl_estimate(&model, &schedule, sampler, method.method(), paths, cfg.seed)?)
            } else {
                None
            };
            let tv = match (exact, mc) {
                (Some(d), _) => Some(pinsker_tv(d.max(0.0))?),
                (None, Some(m)) => Some(pinsker_tv(m.estimate.max(0.0))?),
                _ => None,
            };
            let label = format!(
                "{} {} T={} n={} {}",
                model.label(),
                schedule.label(),
                schedule.horizon(),
                schedule.steps(),
                sampler.label()
            );
            let violations = exact_report
                .as_ref()
                .map(|r| r.violations().into_iter().map(|v| format!("{label}: {v}")).collect())
                .unwrap_or_default();
            let detail = json!({
                "row": label,
                "mmse_riemann_term": exact_report.as_ref().map(|r| r.mmse_riemann_term),
                "mutual_info_term": exact_report.as_ref().map(|r| r.mutual_info_term),
                "estimator_error_term": exact_report.as_ref().map(|r| r.estimator_error_term),
                "mc_paths_used": mc.map(|m| m.paths_used),
                "mc_paths_failed": mc.map(|m| m.paths_failed),
            });
            Ok(DivergenceRow {
                cells: vec![
                    model.label(),
                    schedule.label().to_string(),
                    num(schedule.alpha()),
                    num(Some(schedule.horizon())),
                    schedule.steps().to_string(),
                    sampler.label(),
                    num(exact),
                    num(exact_report.as_ref().map(|r| r.thm1_bound)),
                    num(exact_report.as_ref().and_then(|r| r.thm2_bound)),
                    num(mc.map(|m| m.estimate)),
                    num(mc.map(|m| m.std_error)),
                    num(tv),
                ],
                violations,
                detail,
            })
        })
        .collect::<Result<_>>()?;
    let header = [
        "model", "schedule", "alpha", "T", "n", "estimator", "delta_exact", "thm1", "thm2", "mc", "mc_se", "tv",
    ];
    let csv = csv_string(&header, &rows.iter().map(|r| r.cells.clone()).collect::<Vec<_>>())?;
    let violations: Vec<String> = rows.iter().flat_map(|r| r.violations.clone()).collect();
    Ok(ExperimentOutput {
        kind: ExperimentKind::Divergence,
        csv,
        extra_files: vec![],
        summary: json!({
            "cells": rows.len(),
            "monte_carlo": monte_carlo,
            "kl_method": method.label(),
            "rows": rows.iter().map(|r| r.detail.clone()).collect::<Vec<_>>(),
        }),
        violations,
    })
}

/// Slope of `log Δ_n` against `log n`.
///
/// Order 1 uses exact values for deterministic drifts. Order 2 estimates
/// `Δ_n` for each kernel by Monte Carlo, with `paths` at the largest `n` and
/// proportionally fewer below.
pub fn run_rate_study(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let samplers = cfg.samplers();
    let order = cfg.order.unwrap_or(if samplers.iter().any(|s| matches!(s, SamplerSpec::Kernel(_))) {
        2
    } else {
        1
    });
    let ns = cfg.sweep.n.clone().unwrap_or_else(|| {
        if order == 1 {
            config::DEFAULT_N_GRID.to_vec()
        } else {
            vec![4, 8, 16, 32, 64]
        }
    });
    if ns.len() < 2 {
        return Err(Error::Config("a rate study needs at least two values of n".into()));
    }
    let n_max = *ns.iter().max().expect("nonempty");
    let model = cfg.model(&cfg.target)?;
    let method = cfg.kl_method.unwrap_or(KlMethodSpec::Conditional {
        nodes: crate::divergence::DEFAULT_CONDITIONAL_NODES,
    });
    let top_paths = cfg.paths()?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut violations = Vec::new();
    let mut plot = Plot::new("Divergence against number of steps", "n", "Δ_n", Scale::Log);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (si, sampler) in samplers.iter().enumerate() {
        let mut points: Vec<(usize, usize, f64, f64, Option<f64>)> = Vec::new();
        for &n in &ns {
            let schedule = cfg.schedule.with(cfg.schedule.horizon, n, None).build()?;
            let exact = match sampler {
                SamplerSpec::Drift(e) => Some(delta_exact(&model, &schedule, e)?.delta_exact),
                SamplerSpec::Kernel(k) => kernel_delta_exact(&model, &schedule, *k)?,
            };
            if order == 1 {
                let d = exact.ok_or_else(|| {
                    Error::Config(format!("order 1 needs a closed form, none for {}", sampler.label()))
                })?;
                points.push((n, 0, d, 0.0, exact));
            } else {
                let paths = (top_paths as u128 * n as u128 / n_max as u128) as usize;
                let paths = paths.max(top_paths.min(10_000)).max(2);
                let est = kl_estimate(&model, &schedule, sampler, method.method(), paths, cfg.seed)?;
                points.push((n, paths, est.estimate, est.std_error, exact));
            }
        }
        for &(n, paths, d, se, exact) in &points {
            rows.push(vec![
                sampler.label(),
                n.to_string(),
                paths.to_string(),
                num(Some(d)),
                num(Some(se)),
                num(exact),
                num(Some(n as f64 * d)),
            ]);
        }
        let is_zero = |d: f64, se: f64| d.abs() <= 3.0 * se + 1e-12;
        let known_positive = points.iter().any(|p| p.4.is_some_and(|e| e > 1e-12));
        if !known_positive && points.iter().all(|p| is_zero(p.2, p.3)) {
            fits.push(json!({"sampler": sampler.label(), "indistinguishable_from_zero": true}));
            continue;
        }
        let last = points.iter().find(|p| p.0 == n_max).expect("largest n present");
        if order == 2 && last.3 >= RATE_MAX_REL_SE * last.2.abs() {
            return Err(Error::Numerical(format!(
                "relative standard error {:.3} at n = {n_max} exceeds {RATE_MAX_REL_SE}; increase paths",
                last.3 / last.2.abs()
            )));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
        let rel: Vec<f64> = points.iter().map(|p| p.3 / p.2.abs()).collect();
        let fit = log_log_fit(&xs, &ys, (order == 2).then_some(rel.as_slice()))?;
        if let Some([lo, hi]) = cfg.expect_slope {
            if !(fit.slope >= lo && fit.slope <= hi) {
                violations.push(format!(
                    "{}: slope {:.4} outside [{lo}, {hi}]",
                    sampler.label(),
                    fit.slope
                ));
            }
        }
        let color = colors[si % colors.len()];
        plot.markers(xs.iter().copied().zip(ys.iter().copied()).collect(), color, &sampler.label());
        let line: Vec<(f64, f64)> =
            xs.iter().map(|x| (*x, (fit.intercept + fit.slope * x.ln()).exp())).collect();
        plot.dashed(line, color, &format!("slope {:.3}", fit.slope));
        fits.push(json!({
            "sampler": sampler.label(),
            "indistinguishable_from_zero": false,
            "slope": fit.slope,
            "slope_se": fit.slope_se,
            "ci_low": fit.ci_low,
            "ci_high": fit.ci_high,
            "intercept": fit.intercept,
        }));
    }
    let csv = csv_string(&["sampler", "n", "paths", "delta", "std_error", "delta_exact", "n_delta"], &rows)?;
    Ok(ExperimentOutput {
        kind: ExperimentKind::RateStudy,
        csv,
        extra_files: vec![("rate.svg".into(), plot.render())],
        summary: json!({
            "order": order,
            "target": model.label(),
            "T": cfg.schedule.horizon,
            "kl_method": if order == 2 { Some(method.label()) } else { None },
            "fits": fits,
        }),
        violations,
    })
}

/// Exact divergence and the geometric bound over an α grid at fixed `(T, n)`.
pub fn run_schedule_sweep(cfg: &RunConfig) -> Result<ExperimentOutput> {
    if cfg.kernel.is_some()
        || cfg.estimators().iter().any(|e| *e != EstimatorSpec::ExactPosteriorMean)
    {
        return Err(Error::Config("schedule sweeps assume the exact conditional-mean estimator".into()));
    }
    let model = cfg.model(&cfg.target)?;
    let (horizon, n) = (cfg.schedule.horizon, cfg.schedule.n);
    let mut alphas: Vec<(f64, bool)> = cfg
        .sweep
        .alpha
        .clone()
        .unwrap_or_else(|| vec![0.5, 0.75, 0.9, 1.0, 1.05, 1.1, 1.25, 1.5, 2.0])
        .into_iter()
        .map(|a| (a, false))
        .collect();
    let corollary = if cfg.sweep.include_corollary {
        let a = corollary_alpha(horizon, n).map_err(|e| Error::Config(e.to_string()))?;
        alphas.push((a, true));
        Some(a)
    } else {
        None
    };
    let rows: Vec<(f64, bool, f64, f64, f64)> = alphas
        .par_iter()
        .map(|&(a, is_cor)| -> Result<_> {
            let s = cfg.schedule.with(horizon, n, Some(a)).build()?;
            let r = delta_exact(&model, &s, &EstimatorSpec::ExactPosteriorMean)?;
            let b2 = r.thm2_bound.expect("geometric schedule with exact estimator");
            Ok((a, is_cor, r.delta_exact, b2, r.thm1_bound))
        })
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    for &(a, _, d, b2, _) in &rows {
        if d > b2 + BOUND_TOL {
            violations.push(format!("alpha {a}: delta {d} exceeds geometric bound {b2}"));
        }
    }
    let argmin = |key: fn(&(f64, bool, f64, f64, f64)) -> f64| {
        rows.iter()
            .min_by(|x, y| key(x).total_cmp(&key(y)))
            .map(|r| r.0)
    };
    let unit_bound = thm2_bound(&model, &cfg.schedule.with(horizon, n, Some(1.0)).build()?)?;
    let corollary_bound = rows.iter().find(|r| r.1).map(|r| r.3);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|&(a, c, d, b2, b1)| {
            vec![
                num(Some(a)),
                c.to_string(),
                num(Some(horizon)),
                n.to_string(),
                num(Some(d)),
                num(Some(b2)),
                num(Some(b1)),
            ]
        })
        .collect();
    let csv = csv_string(&["alpha", "corollary", "T", "n", "delta_exact", "thm2", "thm1"], &csv_rows)?;
    let mut sorted = rows.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut plot = Plot::new("Divergence and geometric bound over the rate", "alpha", "nats", Scale::Linear);
    plot.line(sorted.iter().map(|r| (r.0, r.2)).collect(), "#1f77b4", "exact divergence")
        .line(sorted.iter().map(|r| (r.0, r.3)).collect(), "#d62728", "geometric bound");
    Ok(ExperimentOutput {
        kind: ExperimentKind::ScheduleSweep,
        csv,
        extra_files: vec![("sweep.svg".into(), plot.render())],
        summary: json!({
            "target": model.label(),
            "T": horizon,
            "n": n,
            "argmin_delta_alpha": argmin(|r| r.2),
            "argmin_thm2_alpha": argmin(|r| r.3),
            "thm2_unit_limit": unit_bound,
            "corollary_alpha": corollary,
            "thm2_at_corollary": corollary_bound,
            "corollary_below_unit_limit": corollary_bound.map(|b| b < unit_bound),
        }),
        violations,
    })
}

/// Covariances between the reversed-chain increments `B_k` and future
/// noises `W_m`, and the variances of `B_k`.
pub fn run_reverse_check(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let model = cfg.model(&cfg.target)?;
    let schedule = cfg.schedule.build()?;
    let paths = cfg.paths()?;
    let diag = reverse_diagnostics(&model, &schedule, paths, cfg.seed)?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let (nrows, ncols) = diag.cross_covariances.shape();
    for r in 0..nrows {
        for c in 0..ncols {
            let est = diag.cross_covariances[(r, c)];
            let se = diag.std_errors[(r, c)];
            let exp = diag.expected[(r, c)];
            let z = (est - exp) / se;
            rows.push(vec![
                "cross".into(),
                (r + 1).to_string(),
                (c + 1).to_string(),
                num(Some(est)),
                num(Some(se)),
                num(Some(exp)),
                num(Some(z)),
            ]);
        }
    }
    for (k, m, z) in diag.future_z_scores() {
        if z >= REVERSE_Z_LIMIT {
            violations.push(format!("cov(B_{k}, W_{m}) has |z| = {z:.2}"));
        }
    }
    let mut max_var_z: f64 = 0.0;
    for (i, &(v, se, expected)) in diag.b_variances.iter().enumerate() {
        let z = (v - expected) / se;
        max_var_z = max_var_z.max(z.abs());
        if z.abs() > REVERSE_Z_LIMIT {
            violations.push(format!("Var(B_{}) = {v} vs {expected}, |z| = {:.2}", i + 1, z.abs()));
        }
        rows.push(vec![
            "variance".into(),
            (i + 1).to_string(),
            String::new(),
            num(Some(v)),
            num(Some(se)),
            num(Some(expected)),
            num(Some(z)),
        ]);
    }
    let csv = csv_string(&["kind", "k", "m", "estimate", "std_error", "expected", "z"], &rows)?;
    let mut extra = Vec::new();
    if let Some(keep) = cfg.trajectories {
        let sim = SimulationConfig::new(keep.clamp(1, paths), cfg.seed);
        let traj = simulate_comparison(&model, &schedule, &sim)?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        extra.push(("trajectories.csv".into(), String::from_utf8(buf).expect("utf-8")));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::ReverseCheck,
        csv,
        extra_files: extra,
        summary: json!({
            "target": model.label(),
            "n": schedule.steps(),
            "paths": paths,
            "max_future_z": diag.max_future_z(),
            "max_variance_z": max_var_z,
            "z_limit": REVERSE_Z_LIMIT,
        }),
        violations,
    })
}

/// Tweedie's score against a central difference of the log-density of
/// `a·X + σ·N` on a grid of `y`.
pub fn run_tweedie_check(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let model = cfg.model(&cfg.target)?;
    if model.dim() != 1 {
        return Err(Error::Unsupported("the Tweedie grid check is one-dimensional".into()));
    }
    let tw = &cfg.tweedie;
    if tw.points < 2 || !(tw.y_max > tw.y_min) || !(tw.h > 0.0) {
        return Err(Error::Config("tweedie grid needs points >= 2, y_max > y_min and h > 0".into()));
    }
    let mut rows = Vec::with_capacity(tw.points);
    let mut max_dev: f64 = 0.0;
    let (mut s_tw, mut s_fd) = (Vec::new(), Vec::new());
    for i in 0..tw.points {
        let y = tw.y_min + (tw.y_max - tw.y_min) * i as f64 / (tw.points - 1) as f64;
        let score = tweedie_score(&model, &[y], tw.a, tw.sigma)?[0];
        let up = model.log_marginal_density(&[y + tw.h], tw.a, tw.sigma)?;
        let down = model.log_marginal_density(&[y - tw.h], tw.a, tw.sigma)?;
        let fd = (up - down) / (2.0 * tw.h);
        if !(score.is_finite() && fd.is_finite()) {
            return Err(Error::Numerical(format!("non-finite score at y = {y}")));
        }
        let dev = (score - fd).abs();
        max_dev = max_dev.max(dev);
        s_tw.push((y, score));
        s_fd.push((y, fd));
        rows.push(vec![num(Some(y)), num(Some(score)), num(Some(fd)), num(Some(dev))]);
    }
    let violations = if max_dev < tw.tolerance {
        vec![]
    } else {
        vec![format!("max deviation {max_dev:e} is not below {:e}", tw.tolerance)]
    };
    let mut plot = Plot::new("Score from the conditional mean", "y", "score", Scale::Linear);
    plot.line(s_tw, "#1f77b4", "affine map of the mean")
        .dashed(s_fd, "#d62728", "finite difference");
    Ok(ExperimentOutput {
        kind: ExperimentKind::TweedieCheck,
        csv: csv_string(&["y", "tweedie", "finite_difference", "abs_dev"], &rows)?,
        extra_files: vec![("tweedie.svg".into(), plot.render())],
        summary: json!({
            "target": model.label(),
            "a": tw.a,
            "sigma": tw.sigma,
            "max_abs_deviation": max_dev,
            "tolerance": tw.tolerance,
        }),
        violations,
    })
}

/// `M(t)`, its left Riemann step function and the gap between them.
pub fn run_figure1(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let model = cfg.model(&cfg.target)?;
    let schedule = cfg.schedule.build()?;
    let samples = cfg.curve_samples.unwrap_or(401);
    let fig = figure1_decomposition(&model, &schedule, samples)?;
    let mut rows = Vec::new();
    for &(t, m) in &fig.curve {
        rows.push(vec!["mmse".to_string(), num(Some(t)), num(Some(m))]);
    }
    for &(t, m) in &fig.steps {
        rows.push(vec!["step".to_string(), num(Some(t)), num(Some(m))]);
    }
    let bound = schedule.max_increment() * model.trace_covariance();
    let mut violations = Vec::new();
    if fig.gap_area < -2.0 * BOUND_TOL || fig.gap_area > bound + 2.0 * BOUND_TOL {
        violations.push(format!("gap area {} outside [0, {bound}]", fig.gap_area));
    }
    let mut plot = Plot::new("MMSE and its left Riemann sum", "t", "M(t)", Scale::Linear);
    for k in 1..=schedule.steps() {
        let (a, b) = (schedule.time(k - 1), schedule.time(k));
        let top = fig.steps[2 * (k - 1)].1;
        let mut poly = vec![(a, top), (b, top)];
        for i in (0..=24).rev() {
            let t = a + (b - a) * i as f64 / 24.0;
            poly.push((t, model.mmse(t)?.value));
        }
        plot.fill(poly, "#d62728");
    }
    plot.line(fig.steps.clone(), "#444444", "left step function")
        .line(fig.curve.clone(), "#1f77b4", "M(t)");
    Ok(ExperimentOutput {
        kind: ExperimentKind::Figure1,
        csv: csv_string(&["series", "t", "value"], &rows)?,
        extra_files: vec![("figure1.svg".into(), plot.render())],
        summary: json!({
            "target": model.label(),
            "riemann_area": fig.riemann_area,
            "info_area": fig.info_area,
            "gap_area": fig.gap_area,
            "delta_exact": fig.gap_area / 2.0,
            "gap_bound": bound,
        }),
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub bound: f64,
    pub sandwich: f64,
    pub alpha_unit: f64,
    pub eigen_clamp: f64,
    pub reverse_z: f64,
    pub tweedie: f64,
    pub max_failed_path_fraction: f64,
    pub rate_max_rel_se: f64,
    pub quadrature: QuadratureConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub config_digest: String,
    pub seed: u64,
    pub paths: u64,
    pub workers: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub tolerances: Tolerances,
    /// Sub-Gaussian constant `L` of each target.
    pub sub_gaussian_constants: Vec<f64>,
    pub status: &'static str,
    pub violations: Vec<String>,
    pub summary: Value,
    pub config: Value,
}

/// Writes `results.csv`, the extra files and `manifest.json` into `out`.
pub fn write_outputs(
    out: &Path,
    cfg: &RunConfig,
    output: &ExperimentOutput,
    started: SystemTime,
    elapsed: Duration,
    workers: usize,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let mut files = vec!["results.csv".to_string()];
    std::fs::write(out.join("results.csv"), &output.csv)?;
    for (name, contents) in &output.extra_files {
        std::fs::write(out.join(name), contents)?;
        files.push(name.clone());
    }
    files.push("manifest.json".into());
    let sub_gaussian = cfg
        .targets()
        .iter()
        .map(|t| cfg.model(t).map(|m| m.sub_gaussian_constant()))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: output.kind.name(),
        config_digest: cfg.digest()?,
        seed: cfg.seed,
        paths: cfg.paths,
        workers,
        started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        wall_clock_seconds: elapsed.as_secs_f64(),
        outputs: files,
        tolerances: Tolerances {
            bound: BOUND_TOL,
            sandwich: SANDWICH_TOL,
            alpha_unit: ALPHA_UNIT_TOL,
            eigen_clamp: EIGEN_CLAMP,
            reverse_z: REVERSE_Z_LIMIT,
            tweedie: cfg.tweedie.tolerance,
            max_failed_path_fraction: MAX_FAILED_FRACTION,
            rate_max_rel_se: RATE_MAX_REL_SE,
            quadrature: cfg.quadrature.unwrap_or_default(),
        },
        sub_gaussian_constants: sub_gaussian,
        status: if output.violations.is_empty() { "ok" } else { "violation" },
        violations: output.violations.clone(),
        summary: output.summary.clone(),
        config: serde_json::from_str(&cfg.canonical_json()?)?,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Output directory: the configured one, else `out/<experiment>`.
pub fn output_dir(cfg: &RunConfig, kind: ExperimentKind) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(kind.name()))
}
