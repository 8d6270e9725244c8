//! The JSON run configuration.
//!
//! ```json
//! {
//!   "experiment": "divergence",
//!   "target": {"kind": "isotropic_gaussian", "mean": 0.0, "variance": 1.0},
//!   "schedule": {"family": "uniform", "T": 1.0, "n": 4},
//!   "estimator": {"variant": "exact_posterior_mean"},
//!   "paths": 100000,
//!   "seed": 7
//! }
//! ```
//!
//! One-dimensional targets may give means and atoms as bare numbers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::divergence::{KlMethod, SamplerSpec, DEFAULT_CONDITIONAL_NODES};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, KernelSpec};
use crate::schedules::{
    corollary_alpha, explicit_schedule, geometric_schedule, uniform_schedule, Schedule,
};
use crate::targets::{QuadratureConfig, TargetKind, TargetModel};

pub const DEFAULT_PATHS: u64 = 100_000;
pub const DEFAULT_N_GRID: [usize; 7] = [8, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Divergence,
    RateStudy,
    ScheduleSweep,
    ReverseCheck,
    TweedieCheck,
    Figure1,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Divergence => "divergence",
            ExperimentKind::RateStudy => "rate_study",
            ExperimentKind::ScheduleSweep => "schedule_sweep",
            ExperimentKind::ReverseCheck => "reverse_check",
            ExperimentKind::TweedieCheck => "tweedie_check",
            ExperimentKind::Figure1 => "figure1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFamilySpec {
    #[default]
    Uniform,
    Geometric,
    /// Geometric with `α = (T log T)^{1/n}`.
    Corollary,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub family: ScheduleFamilySpec,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    #[serde(default = "four")]
    pub n: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

fn four() -> usize {
    4
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            family: ScheduleFamilySpec::Uniform,
            horizon: 1.0,
            n: 4,
            alpha: None,
            times: None,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match self.family {
            ScheduleFamilySpec::Uniform => uniform_schedule(self.horizon, self.n),
            ScheduleFamilySpec::Geometric => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::Config("geometric schedule needs \"alpha\"".into()))?;
                geometric_schedule(self.horizon, self.n, alpha)
            }
            ScheduleFamilySpec::Corollary => {
                geometric_schedule(self.horizon, self.n, corollary_alpha(self.horizon, self.n)?)
            }
            ScheduleFamilySpec::Explicit => {
                let times = self
                    .times
                    .clone()
                    .ok_or_else(|| Error::Config("explicit schedule needs \"times\"".into()))?;
                explicit_schedule(times)
            }
        }
    }

    /// Same family with another `(T, n, α)`; `α = 1` gives the uniform grid.
    pub fn with(&self, horizon: f64, n: usize, alpha: Option<f64>) -> ScheduleSpec {
        let mut s = self.clone();
        s.horizon = horizon;
        s.n = n;
        if let Some(a) = alpha {
            s.family = ScheduleFamilySpec::Geometric;
            s.alpha = Some(a);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum KlMethodSpec {
    #[default]
    LogRatio,
    Conditional {
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

fn default_nodes() -> usize {
    DEFAULT_CONDITIONAL_NODES
}

impl KlMethodSpec {
    pub fn method(&self) -> KlMethod {
        match *self {
            KlMethodSpec::LogRatio => KlMethod::LogRatio,
            KlMethodSpec::Conditional { nodes } => KlMethod::Conditional { nodes },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KlMethodSpec::LogRatio => "log_ratio",
            KlMethodSpec::Conditional { .. } => "conditional",
        }
    }
}

/// Grids swept by the runners; absent axes fall back to the single
/// configured value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "T", default)]
    pub horizon: Option<Vec<f64>>,
    #[serde(default)]
    pub targets: Option<Vec<TargetKind>>,
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorSpec>>,
    #[serde(default)]
    pub kernels: Option<Vec<KernelSpec>>,
    /// Adds `(T log T)^{1/n}` to the α grid of a schedule sweep.
    #[serde(default)]
    pub include_corollary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweedieSpec {
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "y_min")]
    pub y_min: f64,
    #[serde(default = "y_max")]
    pub y_max: f64,
    #[serde(default = "points")]
    pub points: usize,
    /// Central-difference step.
    #[serde(default = "fd_step")]
    pub h: f64,
    #[serde(default = "tweedie_tol")]
    pub tolerance: f64,
}

fn y_min() -> f64 {
    -5.0
}
fn y_max() -> f64 {
    5.0
}
fn points() -> usize {
    201
}
fn fd_step() -> f64 {
    1e-4
}
fn tweedie_tol() -> f64 {
    1e-4
}

impl Default for TweedieSpec {
    fn default() -> Self {
        Self {
            a: 1.0,
            sigma: 1.0,
            y_min: y_min(),
            y_max: y_max(),
            points: points(),
            h: fd_step(),
            tolerance: tweedie_tol(),
        }
    }
}

fn default_target() -> TargetKind {
    TargetKind::IsotropicGaussian {
        mean: vec![0.0],
        variance: 1.0,
    }
}

fn default_paths() -> u64 {
    DEFAULT_PATHS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_target")]
    pub target: TargetKind,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub estimator: Option<EstimatorSpec>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepSpec,
    /// Attach a Monte Carlo estimate to divergence rows (default on).
    #[serde(default)]
    pub monte_carlo: Option<bool>,
    #[serde(default)]
    pub kl_method: Option<KlMethodSpec>,
    /// Rate-study order: 1 uses exact values, 2 Monte Carlo.
    #[serde(default)]
    pub order: Option<u8>,
    /// Optional accepted range for a fitted slope; outside it is a violation.
    #[serde(default)]
    pub expect_slope: Option<[f64; 2]>,
    #[serde(default)]
    pub tweedie: TweedieSpec,
    #[serde(default)]
    pub curve_samples: Option<usize>,
    /// Number of comparison paths to dump to `trajectories.csv`.
    #[serde(default)]
    pub trajectories: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

/// Turns bare numbers into one-element vectors in target specs.
fn normalize_target(v: &mut Value) {
    let Some(obj) = v.as_object_mut() else { return };
    if let Some(m) = obj.get_mut("mean") {
        if m.is_number() {
            *m = Value::Array(vec![m.take()]);
        }
    }
    for key in ["means", "atoms"] {
        if let Some(Value::Array(items)) = obj.get_mut(key) {
            for item in items.iter_mut() {
                if item.is_number() {
                    *item = Value::Array(vec![item.take()]);
                }
            }
        }
    }
}

fn normalize(doc: &mut Value) {
    if let Some(t) = doc.get_mut("target") {
        normalize_target(t);
    }
    if let Some(Value::Array(ts)) = doc.pointer_mut("/sweep/targets") {
        ts.iter_mut().for_each(normalize_target);
    }
}

impl RunConfig {
    pub fn from_value(mut doc: Value) -> Result<Self> {
        if !doc.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        normalize(&mut doc);
        let cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(doc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every referenced spec against its module.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| Error::Config(e.to_string());
        for target in self.targets() {
            let model = TargetModel::new(target).map_err(as_config)?;
            for est in self.estimators() {
                est.validate(&model).map_err(as_config)?;
            }
        }
        self.schedule.build().map_err(as_config)?;
        let s = &self.sweep;
        let empty = s.n.as_ref().is_some_and(|v| v.is_empty())
            || s.alpha.as_ref().is_some_and(|v| v.is_empty())
            || s.horizon.as_ref().is_some_and(|v| v.is_empty())
            || s.targets.as_ref().is_some_and(|v| v.is_empty())
            || s.estimators.as_ref().is_some_and(|v| v.is_empty())
            || s.kernels.as_ref().is_some_and(|v| v.is_empty());
        if empty {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        if self.estimator.is_some() && self.kernel.is_some() {
            return Err(Error::Config("give either \"estimator\" or \"kernel\", not both".into()));
        }
        if let Some(o) = self.order {
            if !(o == 1 || o == 2) {
                return Err(Error::Config(format!("order must be 1 or 2, got {o}")));
            }
        }
        if let Some([lo, hi]) = self.expect_slope {
            if !(lo <= hi) {
                return Err(Error::Config("expect_slope must be [low, high]".into()));
            }
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<TargetKind> {
        self.sweep.targets.clone().unwrap_or_else(|| vec![self.target.clone()])
    }

    pub fn estimators(&self) -> Vec<EstimatorSpec> {
        self.sweep
            .estimators
            .clone()
            .or_else(|| self.estimator.clone().map(|e| vec![e]))
            .unwrap_or_default()
    }

    /// The samplers under study: explicit estimators and kernels, or the exact
    /// conditional-mean drift when none is given.
    pub fn samplers(&self) -> Vec<SamplerSpec> {
        let mut out: Vec<SamplerSpec> = self.estimators().into_iter().map(SamplerSpec::Drift).collect();
        let kernels = self
            .sweep
            .kernels
            .clone()
            .or_else(|| self.kernel.map(|k| vec![k]))
            .unwrap_or_default();
        out.extend(kernels.into_iter().map(SamplerSpec::Kernel));
        if out.is_empty() {
            out.push(SamplerSpec::Drift(EstimatorSpec::ExactPosteriorMean));
        }
        out
    }

    pub fn model(&self, kind: &TargetKind) -> Result<TargetModel> {
        let model = TargetModel::new(kind.clone())?;
        Ok(match self.quadrature {
            Some(q) => model.with_quadrature(q),
            None => model,
        })
    }

    pub fn paths(&self) -> Result<usize> {
        usize::try_from(self.paths).map_err(|_| Error::Config("paths does not fit in memory".into()))
    }

    /// Canonical JSON with sorted keys; the output directory is excluded.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
        }
        Ok(serde_json::to_string(&v)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let hash = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }
}
