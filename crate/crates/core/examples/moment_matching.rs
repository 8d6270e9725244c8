//! Sampling the two-point law with three kernels and comparing the terminal
//! state `Z_n / T` against the target.

use diffusion_lab::estimators::KernelSpec;
use diffusion_lab::processes::{simulate_moment_matched, SimulationConfig};
use diffusion_lab::schedules::uniform_schedule;
use diffusion_lab::targets::TargetModel;

fn main() -> diffusion_lab::Result<()> {
    let model = TargetModel::two_atom();
    let horizon = 25.0;
    let schedule = uniform_schedule(horizon, 16)?;
    let cfg = SimulationConfig::new(20_000, 9).keep_steps(vec![16]);
    for kernel in [KernelSpec::PosteriorExact, KernelSpec::GaussianMatched, KernelSpec::MeanOnly] {
        let traj = simulate_moment_matched(&model, kernel, &schedule, &cfg)?;
        let z: Vec<f64> = traj.marginal(16, 0).iter().map(|v| v / horizon).collect();
        let positive = z.iter().filter(|v| **v > 0.0).count() as f64 / z.len() as f64;
        let spread = z.iter().map(|v| (v.abs() - 1.0).powi(2)).sum::<f64>() / z.len() as f64;
        println!(
            "{:<17} P(Z > 0) = {positive:.3}   E(|Z/T| − 1)² = {spread:.4}",
            kernel.label()
        );
    }
    Ok(())
}
