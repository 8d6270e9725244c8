//! MMSE and mutual information of a Gaussian mixture: the derivative of `I`
//! is `M/2`, and each information increment sits between the two Riemann
//! rectangles.

use diffusion_lab::divergence::sandwich_check;
use diffusion_lab::schedules::geometric_schedule;
use diffusion_lab::targets::{TargetKind, TargetModel};

fn main() -> diffusion_lab::Result<()> {
    let model = TargetModel::new(TargetKind::GaussianMixture {
        weights: vec![0.3, 0.7],
        means: vec![vec![-2.0], vec![1.0]],
        variances: vec![0.25, 0.5],
    })?;
    println!("{:>6} {:>10} {:>10} {:>12}", "s", "M(s)", "I(s)", "2 dI/ds");
    for s in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let h = 1e-3;
        let slope = (model.mutual_information(s + h)? - model.mutual_information(s - h)?) / h;
        println!(
            "{s:>6} {:>10.6} {:>10.6} {slope:>12.6}",
            model.mmse(s)?.value,
            model.mutual_information(s)?
        );
    }
    for row in sandwich_check(&model, &geometric_schedule(4.0, 6, 1.5)?)? {
        println!("k = {}: {:.6} <= {:.6} <= {:.6}", row.k, row.lower, row.mid, row.upper);
    }
    Ok(())
}
