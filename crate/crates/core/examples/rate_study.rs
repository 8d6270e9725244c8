//! Convergence order of the two kernels on the ±1 two-atom target.
//!
//! `cargo run --release --example rate_study -- [paths_at_64]`

use std::time::Instant;

use diffusion_lab::divergence::{kl_estimate, KlMethod, SamplerSpec, DEFAULT_CONDITIONAL_NODES};
use diffusion_lab::estimators::KernelSpec;
use diffusion_lab::schedules::uniform_schedule;
use diffusion_lab::stats::log_log_fit;
use diffusion_lab::targets::TargetModel;

fn main() -> diffusion_lab::Result<()> {
    let top: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let model = TargetModel::two_atom();
    let ns = [4usize, 8, 16, 32, 64];
    let method = KlMethod::Conditional { nodes: DEFAULT_CONDITIONAL_NODES };
    for kernel in [KernelSpec::GaussianMatched, KernelSpec::MeanOnly] {
        let (mut xs, mut ys, mut rel) = (vec![], vec![], vec![]);
        for &n in &ns {
            let schedule = uniform_schedule(1.0, n)?;
            // fewer paths where each path is cheaper and the signal larger
            let paths = (top * n / 64).max(10_000);
            let start = Instant::now();
            let est = kl_estimate(&model, &schedule, &SamplerSpec::Kernel(kernel), method, paths, 11)?;
            println!(
                "{:<17} n={n:<3} paths={paths:<8} Δ={:.4e} ± {:.1e}  ({:.1}s)",
                kernel.label(),
                est.estimate,
                est.std_error,
                start.elapsed().as_secs_f64()
            );
            xs.push(n as f64);
            ys.push(est.estimate);
            rel.push(est.std_error / est.estimate);
        }
        let fit = log_log_fit(&xs, &ys, Some(&rel))?;
        println!(
            "{:<17} slope {:.3}  95% CI [{:.3}, {:.3}]",
            kernel.label(),
            fit.slope,
            fit.ci_low,
            fit.ci_high
        );
    }
    Ok(())
}
