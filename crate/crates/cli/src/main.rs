//! Batch front end for the transport model: characterization sweeps, single
//! experiments, the neurons-per-chip benchmark, and report generation.

mod commands;
mod config;
mod pool;
mod report;

use clap::{Parser, Subcommand};
use config::{CommonArgs, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pulsecomm",
    version,
    about = "Deterministic experiments on the modeled off-wafer pulse path"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep playback-to-chip loopback over the rate grid, regular and
    /// Poisson trains.
    CharDownstream(CommonArgs),
    /// Sweep on-chip generator traffic over the rate grid, regular and
    /// pseudo-random trains.
    CharUpstream(CommonArgs),
    /// One loopback run with full record and delay dumps.
    Loopback(CommonArgs),
    /// Neurons-per-chip packing sweep on the surrogate population or a
    /// spike file.
    Bench(CommonArgs),
    /// Consolidate a run directory into summary JSON and plot-ready CSVs.
    Report { run_dir: PathBuf },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::CharDownstream(args) => commands::char_downstream(&RunConfig::effective(&args)?),
        Cmd::CharUpstream(args) => commands::char_upstream(&RunConfig::effective(&args)?),
        Cmd::Loopback(args) => commands::loopback(&RunConfig::effective(&args)?),
        Cmd::Bench(args) => commands::bench(&RunConfig::effective(&args)?),
        Cmd::Report { run_dir } => report::report(&run_dir),
    }
}
