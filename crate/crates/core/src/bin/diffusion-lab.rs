use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};

use diffusion_lab::experiments::{
    exit_code_for_error, output_dir, run_experiment, write_outputs, ExperimentKind, RunConfig, EXIT_CONFIG,
};
use diffusion_lab::Error;

#[derive(Parser)]
#[command(name = "diffusion-lab", version, about = "Exact and Monte Carlo KL accounting for discrete-time diffusion samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact divergence, bounds and a pathwise estimate per grid point.
    Divergence(Flags),
    /// Log-log slope of the divergence against the number of steps.
    RateStudy(Flags),
    /// Divergence and the geometric bound over a grid of rates.
    ScheduleSweep(Flags),
    /// Independence and variance checks for the time-reversed chain.
    ReverseCheck(Flags),
    /// Tweedie's score against finite differences.
    TweedieCheck(Flags),
    /// The MMSE curve, its left Riemann sum and the gap between them.
    Figure1(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<u32>,
}

fn run(kind: ExperimentKind, flags: Flags) -> Result<i32, Error> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(e) = cfg.experiment {
        if e != kind {
            return Err(Error::Config(format!(
                "config is for {}, not {}",
                e.name(),
                kind.name()
            )));
        }
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = flags.paths {
        cfg.paths = paths;
    }
    if let Some(out) = flags.out {
        cfg.out = Some(out);
    }
    cfg.experiment = Some(kind);
    cfg.validate()?;
    let workers = match flags.workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(w) => w as usize,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let output = pool.install(|| run_experiment(kind, &cfg))?;
    let dir = output_dir(&cfg, kind);
    let manifest = write_outputs(&dir, &cfg, &output, started, clock.elapsed(), workers)?;
    eprintln!(
        "{}: {} -> {} ({:.2}s)",
        kind.name(),
        manifest.status,
        dir.display(),
        manifest.wall_clock_seconds
    );
    for v in &output.violations {
        eprintln!("  violation: {v}");
    }
    Ok(output.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (kind, flags) = match cli.command {
        Command::Divergence(f) => (ExperimentKind::Divergence, f),
        Command::RateStudy(f) => (ExperimentKind::RateStudy, f),
        Command::ScheduleSweep(f) => (ExperimentKind::ScheduleSweep, f),
        Command::ReverseCheck(f) => (ExperimentKind::ReverseCheck, f),
        Command::TweedieCheck(f) => (ExperimentKind::TweedieCheck, f),
        Command::Figure1(f) => (ExperimentKind::Figure1, f),
    };
    match run(kind, flags) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e) as u8)
        }
    }
}
