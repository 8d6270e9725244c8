//! The MMSE curve of a standard Gaussian, its left Riemann sum on unit steps,
//! and the gap area that equals twice the divergence. Writes `figure1.svg`
//! into the directory given as the first argument (default: current).

use std::path::PathBuf;

use diffusion_lab::experiments::{run_figure1, RunConfig};

fn main() -> diffusion_lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let cfg = RunConfig::from_json(r#"{"schedule": {"T": 5, "n": 5}}"#)?;
    let out = run_figure1(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    for (name, contents) in &out.extra_files {
        std::fs::write(dir.join(name), contents)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
