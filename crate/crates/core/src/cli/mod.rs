//! Command-line front end. Exit status 0 on success, 1 on a domain error,
//! 2 on a usage error.

mod commands;
mod config;

pub use config::ToolConfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "foghorn", version, about = "Semantic fog simulation and curriculum adaptation toolkit")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = "FOGHORN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads, overriding the configuration.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render fog over one clear image.
    Simulate(SimulateArgs),
    /// Render a clear dataset at several fog densities.
    Sweep(SweepArgs),
    /// Fit the fog density regressor on a sweep.
    DensityTrain(DensityTrainArgs),
    /// Rank a directory of images by estimated fog density.
    DensityRank(DensityRankArgs),
    /// Run the adaptation curriculum described by a plan file.
    Curriculum(CurriculumArgs),
    /// Mean IoU of predicted label maps against ground truth.
    Evaluate(EvaluateArgs),
}

fn parse_rgb(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected r,g,b".into());
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
        if !(0.0..=1.0).contains(o) {
            return Err(format!("{o} outside [0, 1]"));
        }
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Attenuation coefficient, 1/m.
    #[arg(long)]
    pub beta: f64,
    /// Clear sRGB image.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Cityscapes-encoded 16-bit disparity.
    #[arg(long)]
    pub disparity: PathBuf,
    /// Class-id label map.
    #[arg(long)]
    pub labels: PathBuf,
    /// Optional instance-id map.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Foggy output image.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the filtered transmittance as 16-bit PNG.
    #[arg(long)]
    pub transmittance_out: Option<PathBuf>,
    /// Permit beta below the fog bound.
    #[arg(long)]
    pub allow_haze: bool,
    /// Atmospheric light r,g,b in [0, 1]; estimated when omitted.
    #[arg(long, value_parser = parse_rgb)]
    pub atmospheric_light: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Clear dataset root with images/, disparity/, labels/ [, instances/].
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated attenuation coefficients.
    #[arg(long, value_delimiter = ',', required = true)]
    pub betas: Vec<f64>,
    /// Output root; one beta_<value>/ directory per coefficient.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub allow_haze: bool,
}

#[derive(Debug, Args)]
pub struct DensityTrainArgs {
    /// Sweep root containing beta_<value>/images/ directories.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct DensityRankArgs {
    /// Directory of images to rank.
    #[arg(long)]
    pub images: PathBuf,
    /// Model JSON; falls back to the configuration's density_model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurriculumArgs {
    /// Curriculum plan JSON.
    #[arg(long)]
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth label directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction directory with the same relative paths.
    #[arg(long)]
    pub pred: PathBuf,
    /// Class definition JSON; Cityscapes trainIds when omitted.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<ToolConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ToolConfig::load(p)?,
        None => ToolConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.parallelism = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(err: &Error) {
    eprintln!("error: {err}");
    let mut src = std::error::Error::source(err);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.parallelism {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli, &cfg))
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(1)
        }
    }
}
