//! Time grids `0 = t_0 < t_1 < … < t_n = T` and their increments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rates this close to one are treated as the uniform grid.
pub const ALPHA_UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Uniform,
    Geometric { alpha: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
    increments: Vec<f64>,
    family: Family,
}

fn check_horizon(horizon: f64, n: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidSchedule(format!("horizon must be positive, got {horizon}")));
    }
    if n == 0 {
        return Err(Error::InvalidSchedule("need at least one step".into()));
    }
    Ok(())
}

/// `δ_k = T/n` for every step; `t_n` is pinned to `T`.
pub fn uniform_schedule(horizon: f64, n: usize) -> Result<Schedule> {
    check_horizon(horizon, n)?;
    let h = horizon / n as f64;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    times[n] = horizon;
    let mut increments = vec![h; n];
    increments[n - 1] = horizon - times[n - 1];
    Ok(Schedule {
        times,
        increments,
        family: Family::Uniform,
    })
}

/// `t_k = T(α^k − 1)/(α^n − 1)`, so that `δ_{k+1} = α δ_k`.
pub fn geometric_schedule(horizon: f64, n: usize, alpha: f64) -> Result<Schedule> {
    check_horizon(horizon, n)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidSchedule(format!("rate must be positive, got {alpha}")));
    }
    if (alpha - 1.0).abs() < ALPHA_UNIT_TOL {
        return uniform_schedule(horizon, n);
    }
    let l = alpha.ln();
    let nf = n as f64;
    // α > 1: factor out α^n so nothing overflows; α < 1: expm1 stays in range
    let frac = |k: f64| -> f64 {
        if l > 0.0 {
            ((k - nf) * l).exp() * (-(-k * l).exp_m1()) / (-(-nf * l).exp_m1())
        } else {
            (k * l).exp_m1() / (nf * l).exp_m1()
        }
    };
    let mut times: Vec<f64> = (0..=n).map(|k| horizon * frac(k as f64)).collect();
    times[0] = 0.0;
    times[n] = horizon;
    // δ_k = T α^{k−1} (α − 1)/(α^n − 1), computed directly rather than by differencing
    let first = if l > 0.0 {
        horizon * ((1.0 - nf) * l).exp() * (-(-l).exp_m1()) / (-(-nf * l).exp_m1())
    } else {
        horizon * l.exp_m1() / (nf * l).exp_m1()
    };
    let increments: Vec<f64> = (0..n).map(|k| first * (k as f64 * l).exp()).collect();
    let schedule = Schedule {
        times,
        increments,
        family: Family::Geometric { alpha },
    };
    if schedule.increments.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidSchedule(format!(
            "rate {alpha} with n = {n} underflows the first step"
        )));
    }
    Ok(schedule)
}

/// A schedule from an explicit strictly increasing time vector starting at 0.
pub fn explicit_schedule(times: Vec<f64>) -> Result<Schedule> {
    if times.len() < 2 {
        return Err(Error::InvalidSchedule("need at least t_0 and t_1".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidSchedule("t_0 must be 0".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("schedule times"));
    }
    let increments: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if increments.iter().any(|d| *d <= 0.0) {
        return Err(Error::InvalidSchedule("times must be strictly increasing".into()));
    }
    Ok(Schedule {
        times,
        increments,
        family: Family::Explicit,
    })
}

/// `α_n = (T log T)^{1/n}`.
pub fn corollary_alpha(horizon: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let base = horizon * horizon.ln();
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "corollary rate needs T log T > 1, got T = {horizon}"
        )));
    }
    Ok((base.ln() / n as f64).exp())
}

impl Schedule {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Rate parameter: the geometric α, 1 for uniform grids, `None` otherwise.
    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            Family::Uniform => Some(1.0),
            Family::Geometric { alpha } => Some(alpha),
            Family::Explicit => None,
        }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty schedule")
    }

    pub fn max_increment(&self) -> f64 {
        self.increments.iter().copied().fold(0.0, f64::max)
    }

    /// `t_k`.
    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    /// `δ_k` for `k` in `1..=n`.
    pub fn delta(&self, k: usize) -> f64 {
        self.increments[k - 1]
    }

    pub fn label(&self) -> &'static str {
        match self.family {
            Family::Uniform => "uniform",
            Family::Geometric { .. } => "geometric",
            Family::Explicit => "explicit",
        }
    }
}
