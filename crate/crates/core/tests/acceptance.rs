//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::time::Instant;

use diffusion_lab::divergence::{
    delta_exact, kl_estimate, pathwise_kl_estimate, sandwich_check, thm2_bound, KlMethod, SamplerSpec, BOUND_TOL,
    SANDWICH_TOL,
};
use diffusion_lab::estimators::{EstimatorSpec, KernelSpec};
use diffusion_lab::experiments::{run_experiment, ExperimentKind, RunConfig};
use diffusion_lab::processes::{simulate_comparison, simulate_conditional_representation, SimulationConfig};
use diffusion_lab::schedules::{geometric_schedule, uniform_schedule, Schedule};
use diffusion_lab::stats::{energy_two_sample_test, log_log_fit};
use diffusion_lab::targets::{TargetKind, TargetModel};
use diffusion_lab::Result;

const TWO_ATOM: &str = r#"{"kind": "atom_mixture", "weights": [0.5, 0.5], "atoms": [-1, 1]}"#;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn std_gauss() -> TargetModel {
    TargetModel::isotropic_gaussian(vec![0.0], 1.0).unwrap()
}

fn bimodal() -> TargetModel {
    TargetModel::new(TargetKind::GaussianMixture {
        weights: vec![0.5, 0.5],
        means: vec![vec![-2.0], vec![2.0]],
        variances: vec![0.25, 0.25],
    })
    .unwrap()
}

fn config(json: &str) -> RunConfig {
    RunConfig::from_json(json).unwrap()
}

fn powers(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|p| 1usize << p).collect()
}

fn criterion_1() -> Result<Outcome> {
    let clock = Instant::now();
    let m = std_gauss();
    let s = uniform_schedule(1.0, 4)?;
    let exact = delta_exact(&m, &s, &EstimatorSpec::ExactPosteriorMean)?.delta_exact;
    let mc = pathwise_kl_estimate(&m, &s, &SamplerSpec::Drift(EstimatorSpec::ExactPosteriorMean), 100_000, 1)?;
    let secs = clock.elapsed().as_secs_f64();
    let pass = (exact - 0.033188).abs() < 5e-7 && (mc.estimate - exact).abs() <= 3.0 * mc.std_error && secs < 10.0;
    outcome(
        pass,
        format!("exact {exact:.6}, MC {:.6} ± {:.6}, {secs:.2}s", mc.estimate, mc.std_error),
    )
}

fn criterion_2() -> Result<Outcome> {
    let clock = Instant::now();
    let estimators = [
        EstimatorSpec::ExactPosteriorMean,
        EstimatorSpec::Biased { bias: vec![0.1] },
        EstimatorSpec::Scaled { factor: 0.5 },
    ];
    let (mut cells, mut bad) = (0, Vec::new());
    for m in [std_gauss(), TargetModel::two_atom(), bimodal()] {
        for n in powers(2, 9) {
            let schedules: Vec<Schedule> = vec![
                uniform_schedule(1.0, n)?,
                geometric_schedule(1.0, n, 0.5)?,
                geometric_schedule(1.0, n, 1.0)?,
                geometric_schedule(1.0, n, 2.0)?,
            ];
            for s in &schedules {
                for e in &estimators {
                    let r = delta_exact(&m, s, e)?;
                    cells += 1;
                    if !(r.delta_exact <= r.thm1_bound + BOUND_TOL) {
                        bad.push(format!("{} {} n={n} {}", m.label(), s.label(), e.label()));
                    }
                }
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 120.0,
        format!("{} of {cells} cells within bound, {secs:.1}s {bad:?}", cells - bad.len()),
    )
}

fn criterion_3() -> Result<Outcome> {
    let m = std_gauss();
    let ns = powers(3, 9);
    let deltas = ns
        .iter()
        .map(|&n| Ok(delta_exact(&m, &uniform_schedule(1.0, n)?, &EstimatorSpec::ExactPosteriorMean)?.delta_exact))
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = log_log_fit(&xs, &deltas, None)?;
    let n_delta = 512.0 * deltas[deltas.len() - 1];
    outcome(
        (-1.1..=-0.9).contains(&fit.slope) && n_delta <= 0.5 + 1e-9,
        format!("slope {:.4}, 512·Δ = {n_delta:.6}", fit.slope),
    )
}

fn criterion_4() -> Result<Outcome> {
    let m = std_gauss();
    let s = geometric_schedule(1.0, 4, 2.0)?;
    let bound = thm2_bound(&m, &s)?;
    let exact = delta_exact(&m, &s, &EstimatorSpec::ExactPosteriorMean)?.delta_exact;
    let point = (bound - 0.113240).abs() < 5e-7 && (exact - 0.0421890).abs() < 1e-6 && exact <= bound + BOUND_TOL;

    let mut sweep_ok = true;
    for target in [r#"{"kind": "isotropic_gaussian", "mean": [0], "variance": 1}"#, TWO_ATOM] {
        for (t, n) in [(1.0, 4), (10.0, 16), (100.0, 64)] {
            let cfg = config(&format!(
                r#"{{"target": {target}, "schedule": {{"T": {t}, "n": {n}}},
                    "sweep": {{"alpha": [0.5, 0.8, 0.95, 1.0, 1.02, 1.05, 1.1, 1.3, 1.6, 2.0, 3.0]}}}}"#
            ));
            sweep_ok &= run_experiment(ExperimentKind::ScheduleSweep, &cfg)?.violations.is_empty();
        }
    }
    let cor = run_experiment(
        ExperimentKind::ScheduleSweep,
        &config(r#"{"schedule": {"T": 100, "n": 64}, "sweep": {"include_corollary": true}}"#),
    )?;
    let below = cor.summary["corollary_below_unit_limit"] == true && cor.violations.is_empty();
    outcome(
        point && sweep_ok && below,
        format!(
            "bound {bound:.6}, Δ {exact:.7} ({:+.1e} from 0.042188), sweeps clean: {sweep_ok}, corollary {:.4} vs unit limit {:.4}",
            exact - 0.042188,
            cor.summary["thm2_at_corollary"].as_f64().unwrap_or(f64::NAN),
            cor.summary["thm2_unit_limit"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let clock = Instant::now();
    let method = KlMethod::Conditional { nodes: 12 };
    let ns = powers(2, 6);
    let mut zero_ok = true;
    let mut worst_z: f64 = 0.0;
    for &n in &ns {
        let s = uniform_schedule(1.0, n)?;
        let e = kl_estimate(&std_gauss(), &s, &SamplerSpec::Kernel(KernelSpec::GaussianMatched), method, 100_000, 2)?;
        zero_ok &= e.estimate.abs() < 3.0 * e.std_error + 1e-12;
        if e.std_error > 0.0 {
            worst_z = worst_z.max(e.estimate.abs() / e.std_error);
        }
    }
    let out = run_experiment(
        ExperimentKind::RateStudy,
        &config(&format!(
            r#"{{"target": {TWO_ATOM}, "order": 2, "paths": 1000000, "seed": 3,
                "sweep": {{"n": [4, 8, 16, 32, 64], "kernels": [{{"variant": "gaussian_matched"}}, {{"variant": "mean_only"}}]}}}}"#
        )),
    )?;
    let slope = |i: usize| out.summary["fits"][i]["slope"].as_f64().unwrap_or(f64::NAN);
    let (matched, mean_only) = (slope(0), slope(1));
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        zero_ok && (-2.3..=-1.7).contains(&matched) && (-1.2..=-0.8).contains(&mean_only) && secs < 900.0,
        format!(
            "Gaussian max |z| {worst_z:.2}; two-atom slopes gaussian_matched {matched:.3}, mean_only {mean_only:.3}; {secs:.0}s"
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let m = TargetModel::two_atom();
    let s = uniform_schedule(1.0, 8)?;
    let steps: Vec<usize> = (1..=8).collect();
    let a = simulate_comparison(&m, &s, &SimulationConfig::new(100_000, 4))?;
    let b = simulate_conditional_representation(&m, &s, &SimulationConfig::new(100_000, 5))?;
    let test = energy_two_sample_test(&a.joint_rows(&steps), &b.joint_rows(&steps), steps.len(), 200)?;
    outcome(!test.rejects(1e-3), format!("p = {:.4} over {} blocks", test.p_value, test.blocks))
}

fn criterion_7() -> Result<Outcome> {
    let out = run_experiment(
        ExperimentKind::ReverseCheck,
        &config(&format!(r#"{{"target": {TWO_ATOM}, "schedule": {{"n": 8}}, "paths": 100000, "seed": 6}}"#)),
    )?;
    outcome(
        out.violations.is_empty(),
        format!(
            "max cross |z| {:.2}, max variance |z| {:.2}",
            out.summary["max_future_z"].as_f64().unwrap_or(f64::NAN),
            out.summary["max_variance_z"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_8() -> Result<Outcome> {
    let targets = vec![
        std_gauss(),
        TargetModel::new(TargetKind::DiagonalGaussian { mean: vec![1.0, -1.0], variances: vec![0.5, 2.0] })?,
        TargetModel::two_atom(),
        bimodal(),
        TargetModel::new(TargetKind::AtomMixture {
            weights: vec![0.2, 0.3, 0.5],
            atoms: vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![-1.0, 0.5]],
        })?,
        TargetModel::point_mass(vec![0.7])?,
    ];
    let schedules = [uniform_schedule(1.0, 8)?, geometric_schedule(10.0, 16, 1.3)?];
    let grid: Vec<f64> = (0..=20).map(|i| 0.1 * 100f64.powf(i as f64 / 20.0)).collect();
    let h = 1e-3;
    let (mut sandwich_ok, mut worst_fd) = (true, 0.0f64);
    for m in &targets {
        for s in &schedules {
            sandwich_ok &= sandwich_check(m, s)?.iter().all(|r| !r.violated);
        }
        for &s in &grid {
            let fd = (m.mutual_information(s + h)? - m.mutual_information(s - h)?) / (2.0 * h);
            worst_fd = worst_fd.max((fd - m.mmse(s)?.value / 2.0).abs());
        }
    }
    outcome(
        sandwich_ok && worst_fd < 1e-4,
        format!("sandwich within {SANDWICH_TOL:e}: {sandwich_ok}; max |dI/ds − M/2| = {worst_fd:.2e}"),
    )
}

fn criterion_9() -> Result<Outcome> {
    let out = run_experiment(ExperimentKind::TweedieCheck, &config(&format!(r#"{{"target": {TWO_ATOM}}}"#)))?;
    let dev = out.summary["max_abs_deviation"].as_f64().unwrap_or(f64::NAN);
    outcome(dev < 1e-4 && out.violations.is_empty(), format!("max deviation {dev:.2e} over y in [-5, 5]"))
}

fn criterion_10() -> Result<Outcome> {
    let body = |seed: u64| {
        format!(
            r#"{{"seed": {seed}, "paths": 20000,
                "sweep": {{"n": [4, 16], "targets": [{{"kind": "isotropic_gaussian", "mean": [0], "variance": 1}}, {TWO_ATOM}]}}}}"#
        )
    };
    let run = |seed| run_experiment(ExperimentKind::Divergence, &config(&body(seed)));
    let (a, b, c) = (run(7)?, run(7)?, run(8)?);
    let identical = a.csv == b.csv;
    let mc = |csv: &str| -> Vec<(f64, f64)> {
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        rdr.records()
            .map(|r| {
                let r = r.unwrap();
                (r[9].parse().unwrap(), r[10].parse().unwrap())
            })
            .collect()
    };
    let (first, second) = (mc(&a.csv), mc(&c.csv));
    let worst = first
        .iter()
        .zip(&second)
        .map(|(x, y)| (x.0 - y.0).abs() / (x.1 * x.1 + y.1 * y.1).sqrt())
        .fold(0.0f64, f64::max);
    outcome(
        identical && !first.is_empty() && worst < 3.0,
        format!("byte-identical rerun: {identical}; largest seed shift {worst:.2} combined SE"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("exact divergence vs pathwise Monte Carlo", criterion_1),
        ("max-step bound over the test grid", criterion_2),
        ("first-order rate with the exact drift", criterion_3),
        ("geometric-grid bound and rate sweep", criterion_4),
        ("second-order rate of the matched kernel", criterion_5),
        ("conditional representation in law", criterion_6),
        ("reverse-time independence and variances", criterion_7),
        ("information sandwich and dI/ds = M/2", criterion_8),
        ("Tweedie score", criterion_9),
        ("determinism and seed stability", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
