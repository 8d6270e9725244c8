//! Score of a noisy two-point law from its conditional mean, checked against
//! a finite difference of the log-density.

use diffusion_lab::estimators::tweedie_score;
use diffusion_lab::targets::TargetModel;

fn main() -> diffusion_lab::Result<()> {
    let model = TargetModel::two_atom();
    let (a, sigma, h) = (0.8, 0.6, 1e-5);
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let y = -5.0 + 0.5 * i as f64;
        let score = tweedie_score(&model, &[y], a, sigma)?[0];
        let fd = (model.log_marginal_density(&[y + h], a, sigma)?
            - model.log_marginal_density(&[y - h], a, sigma)?)
            / (2.0 * h);
        worst = worst.max((score - fd).abs());
        println!("y = {y:>5.1}   score = {score:>10.5}   fd = {fd:>10.5}");
    }
    println!("max deviation {worst:.2e}");
    Ok(())
}
