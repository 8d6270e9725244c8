//! Path simulation for the comparison chain, the plug-in sampler, the
//! time-reversed chain, the conditional-sampling representation and the
//! moment-matched sampler.
//!
//! Path `p` always reads stream `(master_seed, p)`, and results are gathered
//! in path order, so output is identical for any worker count.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, KernelSpec};
use crate::linalg::psd_sqrt;
use crate::rng::{derive_stream, Stream};
use crate::schedules::Schedule;
use crate::stats::{covariance_with_se, mean_and_se};
use crate::targets::TargetModel;

/// Default ceiling for stored trajectory data.
pub const DEFAULT_MEMORY_BUDGET: usize = 512 << 20;

/// A run aborts when more than this fraction of its paths fail.
pub const MAX_FAILED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Comparison,
    Sampler,
    Reverse,
    ConditionalRep,
    MomentMatched,
}

/// Which time indices to keep.
#[derive(Debug, Clone, PartialEq)]
pub enum Retention {
    All,
    Steps(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub paths: usize,
    pub master_seed: u64,
    pub retention: Retention,
    pub memory_budget: usize,
}

impl SimulationConfig {
    pub fn new(paths: usize, master_seed: u64) -> Self {
        Self {
            paths,
            master_seed,
            retention: Retention::All,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn keep_steps(mut self, steps: Vec<usize>) -> Self {
        self.retention = Retention::Steps(steps);
        self
    }
}

/// Which streams produced a trajectory set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedManifest {
    pub master_seed: u64,
    /// Paths use stream ids `0..paths`.
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path: usize,
    pub step: usize,
    pub reason: String,
}

/// Simulated paths, stored as `[path][kept step][coordinate]`.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub kind: ProcessKind,
    pub schedule: Schedule,
    pub dim: usize,
    pub paths: usize,
    /// Time indices present in `states`, ascending.
    pub kept_steps: Vec<usize>,
    pub states: Vec<f64>,
    /// The `X` driving each comparison path, `[path][coordinate]`.
    pub latent_x: Option<Vec<f64>>,
    pub seeds: SeedManifest,
    /// Paths that were aborted; their states are NaN.
    pub failures: Vec<PathFailure>,
}

impl TrajectorySet {
    fn slot(&self, k: usize) -> usize {
        self.kept_steps
            .binary_search(&k)
            .unwrap_or_else(|_| panic!("step {k} was not retained"))
    }

    /// State of `path` at time index `k`.
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let width = self.kept_steps.len() * self.dim;
        let off = path * width + self.slot(k) * self.dim;
        &self.states[off..off + self.dim]
    }

    /// Coordinate `j` at time index `k` across successful paths.
    pub fn marginal(&self, k: usize, j: usize) -> Vec<f64> {
        (0..self.paths)
            .map(|p| self.state(p, k)[j])
            .filter(|v| !v.is_nan())
            .collect()
    }

    pub fn latent(&self, path: usize) -> Option<&[f64]> {
        self.latent_x
            .as_ref()
            .map(|x| &x[path * self.dim..(path + 1) * self.dim])
    }

    /// Full path vectors `(Y_{k})_{k ∈ steps}` flattened row-major, one row per path.
    pub fn joint_rows(&self, steps: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths * steps.len() * self.dim);
        for p in 0..self.paths {
            for &k in steps {
                out.extend_from_slice(self.state(p, k));
            }
        }
        out
    }

    /// Writes `path,k,t,coord0,…` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["path".to_string(), "k".into(), "t".into()];
        header.extend((0..self.dim).map(|j| format!("coord{j}")));
        w.write_record(&header)?;
        for p in 0..self.paths {
            for &k in &self.kept_steps {
                let mut rec = vec![p.to_string(), k.to_string(), format!("{}", self.schedule.time(k))];
                rec.extend(self.state(p, k).iter().map(|v| format!("{v}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct PathOutput {
    states: Vec<f64>,
    latent: Option<Vec<f64>>,
    failure: Option<(usize, String)>,
}

/// Records the retained states of one path.
pub(crate) struct Recorder<'a> {
    slots: &'a [Option<usize>],
    dim: usize,
    states: Vec<f64>,
}

impl Recorder<'_> {
    fn record(&mut self, k: usize, y: &[f64]) {
        if let Some(slot) = self.slots[k] {
            self.states[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(y);
        }
    }
}

fn run_paths<F>(
    kind: ProcessKind,
    schedule: &Schedule,
    dim: usize,
    cfg: &SimulationConfig,
    keep_latent: bool,
    simulate: F,
) -> Result<TrajectorySet>
where
    F: Fn(&mut Stream, &mut Recorder, &mut [f64]) -> std::result::Result<(), (usize, String)> + Sync,
{
    if cfg.paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let n = schedule.steps();
    let kept_steps: Vec<usize> = match &cfg.retention {
        Retention::All => (0..=n).collect(),
        Retention::Steps(s) => {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            if s.iter().any(|&k| k > n) {
                return Err(Error::InvalidArgument(format!("retained step beyond n = {n}")));
            }
            s
        }
    };
    let bytes = cfg.paths.saturating_mul(kept_steps.len()).saturating_mul(dim).saturating_mul(8);
    if bytes > cfg.memory_budget {
        return Err(Error::InvalidArgument(format!(
            "storing {} paths × {} steps × {dim} coordinates needs {bytes} bytes, over the {} byte budget; retain fewer steps",
            cfg.paths,
            kept_steps.len(),
            cfg.memory_budget
        )));
    }
    let mut slots = vec![None; n + 1];
    for (i, &k) in kept_steps.iter().enumerate() {
        slots[k] = Some(i);
    }
    let width = kept_steps.len() * dim;
    let outputs: Vec<PathOutput> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = derive_stream(cfg.master_seed, p as u64);
            let mut rec = Recorder {
                slots: &slots,
                dim,
                states: vec![0.0; width],
            };
            let mut latent = vec![0.0; dim];
            let failure = simulate(&mut stream, &mut rec, &mut latent).err();
            let mut states = rec.states;
            if failure.is_some() {
                states.fill(f64::NAN);
            }
            PathOutput {
                states,
                latent: keep_latent.then_some(latent),
                failure,
            }
        })
        .collect();

    let mut states = Vec::with_capacity(cfg.paths * width);
    let mut latent_x = keep_latent.then(|| Vec::with_capacity(cfg.paths * dim));
    let mut failures = Vec::new();
    for (p, out) in outputs.into_iter().enumerate() {
        states.extend_from_slice(&out.states);
        if let (Some(all), Some(x)) = (latent_x.as_mut(), out.latent) {
            all.extend_from_slice(&x);
        }
        if let Some((step, reason)) = out.failure {
            failures.push(PathFailure { path: p, step, reason });
        }
    }
    if failures.len() as f64 > MAX_FAILED_FRACTION * cfg.paths as f64 {
        let first = &failures[0];
        return Err(Error::PathFailures {
            failed: failures.len(),
            total: cfg.paths,
            first_path: first.path,
            first_reason: first.reason.clone(),
        });
    }
    Ok(TrajectorySet {
        kind,
        schedule: schedule.clone(),
        dim,
        paths: cfg.paths,
        kept_steps,
        states,
        latent_x,
        seeds: SeedManifest {
            master_seed: cfg.master_seed,
            paths: cfg.paths,
        },
        failures,
    })
}

/// Walks one comparison path: draws `X ~ μ` into `x`, then calls
/// `visit(k, y_prev, y_next)` for every step. Stream use: one target draw,
/// then `d` normals per step.
pub(crate) fn walk_comparison<F: FnMut(usize, &[f64], &[f64])>(
    model: &TargetModel,
    schedule: &Schedule,
    stream: &mut Stream,
    x: &mut [f64],
    mut visit: F,
) {
    let d = model.dim();
    model.sample_into(stream, x);
    let mut y = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut noise = vec![0.0; d];
    for k in 1..=schedule.steps() {
        let dk = schedule.delta(k);
        let sd = dk.sqrt();
        stream.fill_standard_normal(&mut noise);
        for j in 0..d {
            next[j] = y[j] + dk * x[j] + sd * noise[j];
        }
        visit(k, &y, &next);
        y.copy_from_slice(&next);
    }
}

/// `Y_k = Y_{k−1} + δ_k X + √δ_k N_k` from `Y_0 = 0` with one `X ~ μ` per path.
pub fn simulate_comparison(
    model: &TargetModel,
    schedule: &Schedule,
    cfg: &SimulationConfig,
) -> Result<TrajectorySet> {
    run_paths(ProcessKind::Comparison, schedule, model.dim(), cfg, true, |stream, rec, x| {
        rec.record(0, &vec![0.0; model.dim()]);
        walk_comparison(model, schedule, stream, x, |k, _, next| rec.record(k, next));
        Ok(())
    })
}

/// `Z_k = Z_{k−1} + δ_k f_k(Z_{k−1}) + √δ_k Ñ_k` with `f_k = f(·, t_{k−1})`.
pub fn simulate_sampler(
    model: &TargetModel,
    estimator: &EstimatorSpec,
    schedule: &Schedule,
    cfg: &SimulationConfig,
) -> Result<TrajectorySet> {
    estimator.validate(model)?;
    let d = model.dim();
    run_paths(ProcessKind::Sampler, schedule, d, cfg, false, |stream, rec, _| {
        let mut z = vec![0.0; d];
        let mut drift = vec![0.0; d];
        let mut noise = vec![0.0; d];
        let mut post = model.posterior_workspace();
        rec.record(0, &z);
        for k in 1..=schedule.steps() {
            let dk = schedule.delta(k);
            if estimator.needs_posterior() {
                model.update_posterior(&z, schedule.time(k - 1), &mut post);
            }
            estimator.apply(&post, &mut drift);
            if drift.iter().any(|v| !v.is_finite()) {
                return Err((k, "estimator returned a non-finite value".into()));
            }
            stream.fill_standard_normal(&mut noise);
            let sd = dk.sqrt();
            for j in 0..d {
                z[j] += dk * drift[j] + sd * noise[j];
            }
            rec.record(k, &z);
        }
        Ok(())
    })
}

/// Draws `Y_n = t_n X + √t_n N` and runs the reversed recursion
/// `Y_k = (t_k/t_{k+1}) Y_{k+1} + √(t_k/t_{k+1}) B_k`, `B_k ~ N(0, δ_{k+1} I)`.
pub fn simulate_reverse(
    model: &TargetModel,
    schedule: &Schedule,
    cfg: &SimulationConfig,
) -> Result<TrajectorySet> {
    let d = model.dim();
    let n = schedule.steps();
    run_paths(ProcessKind::Reverse, schedule, d, cfg, false, |stream, rec, x| {
        model.sample_into(stream, x);
        let mut noise = vec![0.0; d];
        stream.fill_standard_normal(&mut noise);
        let tn = schedule.time(n);
        let mut y: Vec<f64> = (0..d).map(|j| tn * x[j] + tn.sqrt() * noise[j]).collect();
        rec.record(n, &y);
        for k in (0..n).rev() {
            let ratio = schedule.time(k) / schedule.time(k + 1);
            let sd = schedule.delta(k + 1).sqrt();
            stream.fill_standard_normal(&mut noise);
            for j in 0..d {
                y[j] = ratio * y[j] + ratio.sqrt() * sd * noise[j];
            }
            rec.record(k, &y);
        }
        Ok(())
    })
}

/// `Y_k = Y_{k−1} + δ_k X_k + √δ_k Ñ_k` with a fresh
/// `X_k ~ Law(X | Y(t_{k−1}) = Y_{k−1})` at every step.
pub fn simulate_conditional_representation(
    model: &TargetModel,
    schedule: &Schedule,
    cfg: &SimulationConfig,
) -> Result<TrajectorySet> {
    let d = model.dim();
    run_paths(ProcessKind::ConditionalRep, schedule, d, cfg, false, |stream, rec, _| {
        let mut y = vec![0.0; d];
        let mut xk = vec![0.0; d];
        let mut noise = vec![0.0; d];
        let mut post = model.posterior_workspace();
        rec.record(0, &y);
        for k in 1..=schedule.steps() {
            let dk = schedule.delta(k);
            model.update_posterior(&y, schedule.time(k - 1), &mut post);
            post.sample_into(stream, &mut xk);
            stream.fill_standard_normal(&mut noise);
            for j in 0..d {
                y[j] += dk * xk[j] + dk.sqrt() * noise[j];
            }
            rec.record(k, &y);
        }
        Ok(())
    })
}

/// Sampler driven by a kernel `Q`. For `gaussian_matched` this is
/// `Z_k = Z_{k−1} + δ_k m(Z_{k−1}) + (δ_k² Σ(Z_{k−1}) + δ_k I)^{1/2} N_k`.
pub fn simulate_moment_matched(
    model: &TargetModel,
    kernel: KernelSpec,
    schedule: &Schedule,
    cfg: &SimulationConfig,
) -> Result<TrajectorySet> {
    let d = model.dim();
    run_paths(ProcessKind::MomentMatched, schedule, d, cfg, false, |stream, rec, _| {
        let mut z = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut xk = vec![0.0; d];
        let mut noise = vec![0.0; d];
        let mut post = model.posterior_workspace();
        rec.record(0, &z);
        for k in 1..=schedule.steps() {
            let dk = schedule.delta(k);
            model.update_posterior(&z, schedule.time(k - 1), &mut post);
            match kernel {
                KernelSpec::PosteriorExact => {
                    post.sample_into(stream, &mut xk);
                    stream.fill_standard_normal(&mut noise);
                    for j in 0..d {
                        z[j] += dk * xk[j] + dk.sqrt() * noise[j];
                    }
                }
                KernelSpec::MeanOnly => {
                    post.mean_into(&mut mean);
                    stream.fill_standard_normal(&mut noise);
                    for j in 0..d {
                        z[j] += dk * mean[j] + dk.sqrt() * noise[j];
                    }
                }
                KernelSpec::GaussianMatched => {
                    post.mean_into(&mut mean);
                    stream.fill_standard_normal(&mut noise);
                    if d == 1 {
                        let var = dk * dk * post.trace_covariance() + dk;
                        z[0] += dk * mean[0] + var.sqrt() * noise[0];
                    } else {
                        let cov = post.covariance() * (dk * dk)
                            + DMatrix::<f64>::identity(d, d) * dk;
                        let root = psd_sqrt(&cov).map_err(|e| (k, e.to_string()))?;
                        let step = root * DVector::from_column_slice(&noise);
                        for j in 0..d {
                            z[j] += dk * mean[j] + step[j];
                        }
                    }
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err((k, "state became non-finite".into()));
            }
            rec.record(k, &z);
        }
        Ok(())
    })
}

/// Empirical check of the time-reversal structure of the comparison chain.
///
/// Row `r` of the matrices corresponds to `B_{r+1}` (`k = 1..n−1`), column
/// `c` to `W_{c+1}` (`m = 1..n`). Coordinates are pooled as independent
/// replicates.
#[derive(Debug, Clone)]
pub struct ReverseDiagnostics {
    /// `B_k` draws, `[path][k−1][coordinate]`.
    pub b_increments: Vec<f64>,
    /// `W_m = Y_m − t_m X` draws, `[path][m−1][coordinate]`.
    pub w_samples: Vec<f64>,
    pub cross_covariances: DMatrix<f64>,
    pub std_errors: DMatrix<f64>,
    /// `cov(B_k, W_m)` from the covariance `min(t_k, t_m)` of the walk.
    pub expected: DMatrix<f64>,
    /// `(estimate, standard error, δ_{k+1})` for `Var(B_k)`.
    pub b_variances: Vec<(f64, f64, f64)>,
}

impl ReverseDiagnostics {
    /// `|ĉov(B_k, W_m)| / SE` for every `m > k`.
    pub fn future_z_scores(&self) -> Vec<(usize, usize, f64)> {
        let (rows, cols) = self.cross_covariances.shape();
        let mut out = Vec::new();
        for r in 0..rows {
            for c in r + 1..cols {
                let z = self.cross_covariances[(r, c)].abs() / self.std_errors[(r, c)];
                out.push((r + 1, c + 1, z));
            }
        }
        out
    }

    pub fn max_future_z(&self) -> f64 {
        self.future_z_scores()
            .into_iter()
            .map(|(_, _, z)| z)
            .fold(0.0, f64::max)
    }
}

pub fn reverse_diagnostics(
    model: &TargetModel,
    schedule: &Schedule,
    paths: usize,
    master_seed: u64,
) -> Result<ReverseDiagnostics> {
    let n = schedule.steps();
    if n < 2 {
        return Err(Error::InvalidArgument("reverse diagnostics need n >= 2".into()));
    }
    let traj = simulate_comparison(model, schedule, &SimulationConfig::new(paths, master_seed))?;
    let d = model.dim();
    let t = schedule.times();
    let mut w_samples = Vec::with_capacity(paths * n * d);
    let mut b_increments = Vec::with_capacity(paths * (n - 1) * d);
    for p in 0..paths {
        let x = traj.latent(p).expect("comparison keeps X");
        for m in 1..=n {
            let y = traj.state(p, m);
            w_samples.extend((0..d).map(|j| y[j] - t[m] * x[j]));
        }
        for k in 1..n {
            let (yk, yk1) = (traj.state(p, k), traj.state(p, k + 1));
            let a = (t[k + 1] / t[k]).sqrt();
            let b = (t[k] / t[k + 1]).sqrt();
            b_increments.extend((0..d).map(|j| a * yk[j] - b * yk1[j]));
        }
    }
    let column = |data: &[f64], width: usize, idx: usize| -> Vec<f64> {
        (0..paths)
            .flat_map(|p| {
                let off = (p * width + idx) * d;
                data[off..off + d].to_vec()
            })
            .collect()
    };
    let mut cross = DMatrix::zeros(n - 1, n);
    let mut ses = DMatrix::zeros(n - 1, n);
    let mut expected = DMatrix::zeros(n - 1, n);
    let mut b_variances = Vec::with_capacity(n - 1);
    for k in 1..n {
        let bk = column(&b_increments, n - 1, k - 1);
        let sq: Vec<f64> = bk.iter().map(|v| v * v).collect();
        let var = mean_and_se(&sq);
        b_variances.push((var.mean, var.std_error, schedule.delta(k + 1)));
        for m in 1..=n {
            let wm = column(&w_samples, n, m - 1);
            let est = covariance_with_se(&bk, &wm);
            cross[(k - 1, m - 1)] = est.mean;
            ses[(k - 1, m - 1)] = est.std_error;
            let tm = t[m];
            let a = (t[k + 1] / t[k]).sqrt();
            let b = (t[k] / t[k + 1]).sqrt();
            expected[(k - 1, m - 1)] = a * t[k].min(tm) - b * t[k + 1].min(tm);
        }
    }
    Ok(ReverseDiagnostics {
        b_increments,
        w_samples,
        cross_covariances: cross,
        std_errors: ses,
        expected,
        b_variances,
    })
}
