//! `pisco` experiment driver.

mod commands;
mod config;
mod output;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Ctx;
use config::ExperimentConfig;
use output::Run;

#[derive(Parser)]
#[command(name = "pisco", version, about = "Self-consistency experiments on simulated multi-coil k-space")]
struct Cli {
    /// JSON experiment configuration; defaults apply to missing sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate the phantom, its acquisition and the sampling mask.
    Phantom,
    /// Weight dispersion across subsets for each kernel geometry.
    ValidateKernel,
    /// Consistency loss against noise level.
    NoiseSweep,
    /// Complete an undersampled Cartesian frame.
    Fit,
    /// Train a coordinate network on the acquired samples.
    Train,
    /// Reconstruct frames from a trained network.
    Recon,
    /// PSNR and SSIM of reconstructed frames against references.
    Metrics,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::ValidateKernel => "validate-kernel",
            Command::NoiseSweep => "noise-sweep",
            Command::Fit => "fit",
            Command::Train => "train",
            Command::Recon => "recon",
            Command::Metrics => "metrics",
        }
    }
}

/// Invalid or unreadable configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return (2, "config");
        }
        if let Some(e) = cause.downcast_ref::<pisco_core::Error>() {
            use pisco_core::Error as E;
            return match e.root() {
                E::InvalidArgument(_) => (2, "config"),
                E::Diverged { .. } => (3, "diverged"),
                E::InsufficientData { .. } => (4, "insufficient-data"),
                _ => (1, "runtime"),
            };
        }
    }
    (1, "runtime")
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.check().map_err(ConfigError)?;

    let ctx = Ctx {
        config: &config,
        quiet: cli.quiet,
    };
    let mut run = Run::start(cli.command.name(), &config.output_dir)?;
    match cli.command {
        Command::Phantom => commands::phantom(&ctx, &mut run)?,
        Command::ValidateKernel => commands::validate_kernel(&ctx, &mut run)?,
        Command::NoiseSweep => commands::noise_sweep(&ctx, &mut run)?,
        Command::Fit => commands::fit(&ctx, &mut run)?,
        Command::Train => commands::train_cmd(&ctx, &mut run)?,
        Command::Recon => commands::recon(&ctx, &mut run)?,
        Command::Metrics => commands::metrics(&ctx, &mut run)?,
    }
    let manifest = run.finish(&config)?;
    if !cli.quiet {
        eprintln!("wrote {}", manifest.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let msg = format!("{err:#}").replace(['\n', '\r'], " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
