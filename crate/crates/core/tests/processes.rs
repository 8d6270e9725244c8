use diffusion_lab::divergence::{kl_estimate, KlMethod, SamplerSpec};
use diffusion_lab::estimators::{EstimatorSpec, KernelSpec};
use diffusion_lab::processes::{
    reverse_diagnostics, simulate_comparison, simulate_conditional_representation, simulate_moment_matched,
    simulate_reverse, simulate_sampler, SimulationConfig, TrajectorySet,
};
use diffusion_lab::schedules::{geometric_schedule, uniform_schedule};
use diffusion_lab::stats::{covariance_with_se, mean_and_se, MeanEstimate};
use diffusion_lab::targets::TargetModel;

const PATHS: usize = 100_000;

fn std_gauss() -> TargetModel {
    TargetModel::isotropic_gaussian(vec![0.0], 1.0).unwrap()
}

fn second_moment(traj: &TrajectorySet, k: usize) -> MeanEstimate {
    let sq: Vec<f64> = traj.marginal(k, 0).iter().map(|v| v * v).collect();
    mean_and_se(&sq)
}

fn within(est: MeanEstimate, target: f64, z: f64) -> bool {
    (est.mean - target).abs() <= z * est.std_error
}

/// Two independent estimates agree within `z` combined standard errors.
fn agree(a: MeanEstimate, b: MeanEstimate, z: f64) -> bool {
    (a.mean - b.mean).abs() <= z * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn comparison_with_atom_at_zero_is_a_random_walk() {
    let m = TargetModel::point_mass(vec![0.0]).unwrap();
    let s = uniform_schedule(2.0, 5).unwrap();
    let traj = simulate_comparison(&m, &s, &SimulationConfig::new(PATHS, 1)).unwrap();
    for k in 1..=5 {
        assert!(within(second_moment(&traj, k), s.time(k), 4.0), "k = {k}");
    }
}

#[test]
fn comparison_marginal_and_increments() {
    let m = std_gauss();
    let s = geometric_schedule(3.0, 6, 1.4).unwrap();
    let traj = simulate_comparison(&m, &s, &SimulationConfig::new(PATHS, 2)).unwrap();
    let tn = s.horizon();
    let scaled: Vec<f64> = traj.marginal(6, 0).iter().map(|y| (y / tn).powi(2)).collect();
    assert!(within(mean_and_se(&scaled), 1.0 + 1.0 / tn, 4.0));
    // increments minus δ_k X are pure noise with variance δ_k
    for k in 1..=6 {
        let d = s.delta(k);
        let resid: Vec<f64> = (0..PATHS)
            .map(|p| traj.state(p, k)[0] - traj.state(p, k - 1)[0] - d * traj.latent(p).unwrap()[0])
            .collect();
        assert!(within(mean_and_se(&resid), 0.0, 4.0), "k = {k}");
    }
}

#[test]
fn sampler_examples() {
    let s = uniform_schedule(2.0, 8).unwrap();
    let cfg = SimulationConfig::new(PATHS, 3);
    let zero = simulate_sampler(&std_gauss(), &EstimatorSpec::Zero, &s, &cfg).unwrap();
    assert!(within(second_moment(&zero, 8), 2.0, 4.0));

    // a constant drift c: point mass at 0 has posterior mean 0, so bias c gives f ≡ c
    let c = 0.75;
    let flat = TargetModel::point_mass(vec![0.0]).unwrap();
    let lin = simulate_sampler(&flat, &EstimatorSpec::Biased { bias: vec![c] }, &s, &cfg).unwrap();
    let z = mean_and_se(&lin.marginal(8, 0));
    assert!(within(z, c * 2.0, 4.0));

    let fine = uniform_schedule(2.0, 256).unwrap();
    let cfg = SimulationConfig::new(PATHS, 4).keep_steps(vec![256]);
    let exact = simulate_sampler(&std_gauss(), &EstimatorSpec::ExactPosteriorMean, &fine, &cfg).unwrap();
    let scaled: Vec<f64> = exact.marginal(256, 0).iter().map(|y| (y / 2.0).powi(2)).collect();
    assert!(within(mean_and_se(&scaled), 1.5, 4.0));
}

#[test]
fn non_finite_drift_aborts_the_run() {
    let s = uniform_schedule(1.0, 3).unwrap();
    let bad = EstimatorSpec::Scaled { factor: f64::INFINITY };
    assert!(simulate_sampler(&std_gauss(), &bad, &s, &SimulationConfig::new(10, 0)).is_err());
}

#[test]
fn reverse_matches_forward() {
    let m = TargetModel::isotropic_gaussian(vec![0.0], 2.0).unwrap();
    let s = uniform_schedule(1.0, 6).unwrap();
    let fwd = simulate_comparison(&m, &s, &SimulationConfig::new(PATHS, 5)).unwrap();
    let rev = simulate_reverse(&m, &s, &SimulationConfig::new(PATHS, 6)).unwrap();
    for k in 1..=6 {
        let t = s.time(k);
        let (a, b) = (second_moment(&fwd, k), second_moment(&rev, k));
        assert!(within(a, t * t * 2.0 + t, 4.0) && within(b, t * t * 2.0 + t, 4.0), "k = {k}");
        let joint = |traj: &TrajectorySet| {
            let x = traj.marginal(k - 1, 0);
            let y = traj.marginal(k, 0);
            covariance_with_se(&x, &y)
        };
        if k > 1 {
            let tp = s.time(k - 1);
            let expect = tp * t * 2.0 + tp;
            assert!(within(joint(&fwd), expect, 4.0) && within(joint(&rev), expect, 4.0), "k = {k}");
        }
    }
}

#[test]
fn conditional_representation_matches_comparison() {
    let m = TargetModel::two_atom();
    let s = uniform_schedule(1.5, 6).unwrap();
    let a = simulate_comparison(&m, &s, &SimulationConfig::new(PATHS, 7)).unwrap();
    let b = simulate_conditional_representation(&m, &s, &SimulationConfig::new(PATHS, 8)).unwrap();
    for k in 1..=6 {
        assert!(agree(mean_and_se(&a.marginal(k, 0)), mean_and_se(&b.marginal(k, 0)), 4.0));
        assert!(agree(second_moment(&a, k), second_moment(&b, k), 4.0));
    }
    let sign = |t: &TrajectorySet| {
        let v: Vec<f64> = t.marginal(6, 0).iter().map(|y| if *y > 0.0 { 1.0 } else { 0.0 }).collect();
        mean_and_se(&v)
    };
    assert!(agree(sign(&a), sign(&b), 4.0));

    let atom = TargetModel::point_mass(vec![0.4]).unwrap();
    let c = simulate_comparison(&atom, &s, &SimulationConfig::new(1000, 9)).unwrap();
    let d = simulate_conditional_representation(&atom, &s, &SimulationConfig::new(1000, 9)).unwrap();
    for k in 1..=6 {
        assert!(agree(second_moment(&c, k), second_moment(&d, k), 4.0));
    }
}

#[test]
fn moment_matched_examples() {
    let g = std_gauss();
    let s = uniform_schedule(1.0, 8).unwrap();
    let mm = simulate_moment_matched(&g, KernelSpec::GaussianMatched, &s, &SimulationConfig::new(PATHS, 10)).unwrap();
    let cmp = simulate_comparison(&g, &s, &SimulationConfig::new(PATHS, 11)).unwrap();
    assert!(agree(second_moment(&mm, 8), second_moment(&cmp, 8), 4.0));
    let e = kl_estimate(&g, &s, &SamplerSpec::Kernel(KernelSpec::GaussianMatched), KlMethod::LogRatio, 20_000, 1)
        .unwrap();
    assert!(e.estimate.abs() <= 3.0 * e.std_error + 1e-12, "{e:?}");

    let m = TargetModel::two_atom();
    let exact = simulate_moment_matched(&m, KernelSpec::PosteriorExact, &s, &SimulationConfig::new(PATHS, 12)).unwrap();
    let rep = simulate_conditional_representation(&m, &s, &SimulationConfig::new(PATHS, 13)).unwrap();
    assert!(agree(second_moment(&exact, 8), second_moment(&rep, 8), 4.0));

    let method = KlMethod::Conditional { nodes: 12 };
    for n in [8, 16, 32] {
        let s = uniform_schedule(1.0, n).unwrap();
        let kl = |k| kl_estimate(&m, &s, &SamplerSpec::Kernel(k), method, 5_000, 14).unwrap();
        let (matched, mean_only) = (kl(KernelSpec::GaussianMatched), kl(KernelSpec::MeanOnly));
        assert!(matched.estimate + 3.0 * matched.std_error < mean_only.estimate - 3.0 * mean_only.std_error, "n = {n}");
    }
}

#[test]
fn reverse_diagnostics_examples() {
    let s = uniform_schedule(1.0, 8).unwrap();
    let diag = reverse_diagnostics(&std_gauss(), &s, PATHS, 15).unwrap();
    assert!(diag.max_future_z() < 4.0);
    for (v, se, expected) in &diag.b_variances {
        assert!((v - expected).abs() < 4.0 * se);
    }
    // B_k is correlated with its own past, so the test has power
    let past = diag.cross_covariances[(3, 3)] / diag.std_errors[(3, 3)];
    assert!(past.abs() > 10.0, "{past}");
    assert!(reverse_diagnostics(&std_gauss(), &uniform_schedule(1.0, 1).unwrap(), 10, 0).is_err());
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let m = TargetModel::two_atom();
    let s = uniform_schedule(1.0, 5).unwrap();
    let cfg = SimulationConfig::new(2_000, 21);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_conditional_representation(&m, &s, &cfg).unwrap().states)
    };
    assert_eq!(run(1), run(3));
}
