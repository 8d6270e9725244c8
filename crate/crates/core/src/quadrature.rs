//! Gauss–Hermite rules against the standard normal and adaptive Simpson
//! integration.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussHermite;

use crate::error::{Error, Result};

/// Nodes and weights for `E[g(ξ)]`, `ξ ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    /// Returns a shared rule of the given order (at least 2).
    pub fn of_order(order: usize) -> Result<Arc<NormalRule>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NormalRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        if let Some(rule) = guard.get(&order) {
            return Ok(Arc::clone(rule));
        }
        let gh = GaussHermite::new(order)
            .map_err(|e| Error::InvalidArgument(format!("Gauss-Hermite order {order}: {e}")))?;
        // weight e^{-x^2}: substitute ξ = √2 x and renormalise by √π
        let mut pairs: Vec<(f64, f64)> = gh
            .iter()
            .map(|(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rule = Arc::new(NormalRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        });
        guard.insert(order, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[g(mean + sd·ξ)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * g(mean + sd * x))
            .sum()
    }
}

const MAX_SIMPSON_DEPTH: u32 = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns the integral and the accumulated error estimate. Fails if the
/// recursion depth limit is hit before the tolerance is met.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut err = 0.0;
    let mut exhausted = false;
    let value = simpson_step(&mut f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH, &mut err, &mut exhausted);
    if exhausted {
        return Err(Error::Numerical(format!(
            "adaptive Simpson on [{a}, {b}] reached depth {MAX_SIMPSON_DEPTH}; achieved error estimate {err:.3e} vs tolerance {tol:.1e}"
        )));
    }
    Ok((value, err))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err: &mut f64,
    exhausted: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *exhausted = true;
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err, exhausted)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err, exhausted)
}
