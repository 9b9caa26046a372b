//! Batch experiment runner for the driven Hubbard ring.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use peierls_cli::commands;
use peierls_cli::config::ExperimentConfig;
use peierls_cli::error::Result;

#[derive(Parser)]
#[command(
    name = "peierls",
    version,
    about = "Exact propagation and tracking control on the driven Fermi-Hubbard ring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
    /// Keep a state snapshot every N steps (overrides the config).
    #[arg(long)]
    snapshot_stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the interacting ground state of the configured sector.
    Ground(CommonOpts),
    /// Drive the ring with the configured pulse and record the trajectory.
    Drive(CommonOpts),
    /// Track a target current with the field-free tracking evolution.
    Track(CommonOpts),
    /// Track an arbitrary observable (current | doublon | bond-real).
    TrackObservable {
        #[command(flatten)]
        common: CommonOpts,
        /// Observable to steer (overrides the config).
        #[arg(long)]
        observable: Option<String>,
    },
    /// Drive through |phi| = pi/2 and self-track: same current, different field.
    MultiplicityDemo(CommonOpts),
    /// Band-limit a recorded control field and re-drive at each cut-off.
    FilterSweep(CommonOpts),
}

fn prepare(common: &CommonOpts, command_name: &str) -> Result<(ExperimentConfig, PathBuf, usize)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(stride) = common.snapshot_stride {
        config.output.snapshot_stride = stride;
    }
    let threads = peierls::configure_threads(common.threads.unwrap_or(0));
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.directory.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("peierls-{command_name}")));
    config.output.directory = Some(out_dir.display().to_string());
    Ok((config, out_dir, threads))
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ground(common) => {
            let (config, out, threads) = prepare(common, "ground")?;
            commands::cmd_ground(config, out, threads)
        }
        Command::Drive(common) => {
            let (config, out, threads) = prepare(common, "drive")?;
            commands::cmd_drive(config, out, threads)
        }
        Command::Track(common) => {
            let (config, out, threads) = prepare(common, "track")?;
            commands::cmd_track(config, out, threads, "track", None)
        }
        Command::TrackObservable { common, observable } => {
            let (config, out, threads) = prepare(common, "track-observable")?;
            commands::cmd_track(config, out, threads, "track-observable", observable.as_deref())
        }
        Command::MultiplicityDemo(common) => {
            let (config, out, threads) = prepare(common, "multiplicity-demo")?;
            commands::cmd_multiplicity_demo(config, out, threads)
        }
        Command::FilterSweep(common) => {
            let (config, out, threads) = prepare(common, "filter-sweep")?;
            commands::cmd_filter_sweep(config, out, threads)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
