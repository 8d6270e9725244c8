use diffusion_lab::estimators::{evaluate_estimator, kernel_moments, sample_kernel, tweedie_score, EstimatorSpec, KernelSpec};
use diffusion_lab::rng::derive_stream;
use diffusion_lab::stats::mean_and_se;
use diffusion_lab::targets::TargetModel;

fn std_gauss() -> TargetModel {
    TargetModel::isotropic_gaussian(vec![0.0], 1.0).unwrap()
}

#[test]
fn drift_variants() {
    let m = std_gauss();
    let (y, t) = ([0.9], 2.0);
    let exact = evaluate_estimator(&m, &EstimatorSpec::ExactPosteriorMean, &y, t).unwrap()[0];
    assert!((exact - 0.3).abs() < 1e-14);
    let b = evaluate_estimator(&m, &EstimatorSpec::Biased { bias: vec![0.5] }, &y, t).unwrap()[0];
    assert!((b - 0.8).abs() < 1e-14);
    let s = evaluate_estimator(&m, &EstimatorSpec::Scaled { factor: 0.5 }, &y, t).unwrap()[0];
    assert!((s - 0.15).abs() < 1e-14);
    assert_eq!(evaluate_estimator(&m, &EstimatorSpec::Zero, &y, t).unwrap(), vec![0.0]);
    assert!(evaluate_estimator(&m, &EstimatorSpec::Biased { bias: vec![0.0, 1.0] }, &y, t).is_err());
}

#[test]
fn gaussian_matched_draws_have_posterior_moments() {
    let m = TargetModel::two_atom();
    let (z, t) = ([0.7], 1.3);
    let (mean, cov) = kernel_moments(&m, KernelSpec::GaussianMatched, &z, t).unwrap();
    assert!((mean[0] - 0.7f64.tanh()).abs() < 1e-12);
    assert!((cov[(0, 0)] - (1.0 - 0.7f64.tanh().powi(2))).abs() < 1e-12);
    let mut stream = derive_stream(5, 0);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| sample_kernel(&m, KernelSpec::GaussianMatched, &z, t, &mut stream).unwrap()[0])
        .collect();
    let first = mean_and_se(&draws);
    assert!((first.mean - mean[0]).abs() < 4.0 * first.std_error);
    let sq: Vec<f64> = draws.iter().map(|x| (x - mean[0]).powi(2)).collect();
    let second = mean_and_se(&sq);
    assert!((second.mean - cov[(0, 0)]).abs() < 4.0 * second.std_error);
}

#[test]
fn exact_and_matched_kernels_coincide_on_gaussians() {
    let m = std_gauss();
    for (z, t) in [(-1.5, 0.2), (0.0, 1.0), (3.0, 7.0)] {
        let a = kernel_moments(&m, KernelSpec::PosteriorExact, &[z], t).unwrap();
        let b = kernel_moments(&m, KernelSpec::GaussianMatched, &[z], t).unwrap();
        assert_eq!(a, b);
        let mut s1 = derive_stream(9, 1);
        let mut s2 = derive_stream(9, 1);
        let x = sample_kernel(&m, KernelSpec::PosteriorExact, &[z], t, &mut s1).unwrap()[0];
        let y = sample_kernel(&m, KernelSpec::GaussianMatched, &[z], t, &mut s2).unwrap()[0];
        let mean = z / (1.0 + t);
        // same law; both are the mean plus a positive multiple of a normal
        assert!(((x - mean) * (y - mean)) >= 0.0);
    }
    let (mean, cov) = kernel_moments(&TargetModel::two_atom(), KernelSpec::MeanOnly, &[0.4], 1.0).unwrap();
    assert!((mean[0] - 0.4f64.tanh()).abs() < 1e-12 && cov[(0, 0)] == 0.0);
}

#[test]
fn tweedie_examples() {
    for y in [-3.0, -0.5, 0.0, 1.25, 4.0] {
        let s = tweedie_score(&std_gauss(), &[y], 1.0, 1.0).unwrap()[0];
        assert!((s + y / 2.0).abs() < 1e-12, "y = {y}");
    }
    assert!(tweedie_score(&std_gauss(), &[0.0], 1.0, 0.0).is_err());
}
