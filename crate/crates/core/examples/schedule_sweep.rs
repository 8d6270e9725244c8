//! Geometric step sizes at a long horizon: the exact divergence and the
//! geometric bound across rates, including `(T log T)^{1/n}`.

use diffusion_lab::divergence::{delta_exact, thm2_bound};
use diffusion_lab::estimators::EstimatorSpec;
use diffusion_lab::schedules::{corollary_alpha, geometric_schedule};
use diffusion_lab::targets::TargetModel;

fn main() -> diffusion_lab::Result<()> {
    let model = TargetModel::isotropic_gaussian(vec![0.0], 1.0)?;
    let (horizon, n) = (100.0, 64);
    let star = corollary_alpha(horizon, n)?;
    let mut grid = vec![0.9, 1.0, 1.02, 1.05, 1.1, 1.2, star];
    grid.sort_by(f64::total_cmp);
    println!("{:>8} {:>12} {:>12}", "alpha", "delta", "bound");
    for alpha in grid {
        let s = geometric_schedule(horizon, n, alpha)?;
        let d = delta_exact(&model, &s, &EstimatorSpec::ExactPosteriorMean)?.delta_exact;
        let mark = if alpha == star { "  <- (T log T)^(1/n)" } else { "" };
        println!("{alpha:>8.4} {d:>12.6} {:>12.6}{mark}", thm2_bound(&model, &s)?);
    }
    Ok(())
}
