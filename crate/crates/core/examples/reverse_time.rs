//! The comparison chain read backwards: the reversed increments `B_k` are
//! uncorrelated with later noise and have variance `δ_{k+1}`.

use diffusion_lab::processes::reverse_diagnostics;
use diffusion_lab::schedules::uniform_schedule;
use diffusion_lab::targets::TargetModel;

fn main() -> diffusion_lab::Result<()> {
    let model = TargetModel::two_atom();
    let schedule = uniform_schedule(2.0, 8)?;
    let diag = reverse_diagnostics(&model, &schedule, 100_000, 5)?;
    println!("largest |z| over cov(B_k, W_m), m > k: {:.2}", diag.max_future_z());
    for (k, (v, se, expected)) in diag.b_variances.iter().enumerate() {
        println!("Var(B_{}) = {v:.5} ± {se:.5}   expected {expected:.5}", k + 1);
    }
    Ok(())
}
