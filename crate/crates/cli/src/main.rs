use std::path::PathBuf;

use clap::{Parser, Subcommand};

use vdtnsim_cli::{cmd_genmap, cmd_run, cmd_sweep};

/// Delay-tolerant network simulator for urban sensor data collection.
#[derive(Parser)]
#[command(name = "vdtnsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario with one seed and write its KPI row.
    Run {
        /// Scenario file
        #[arg(long)]
        scenario: PathBuf,
        /// Master random seed
        #[arg(long)]
        seed: u64,
        /// Also write the full event log (TSV) here
        #[arg(long)]
        log: Option<PathBuf>,
        /// KPI CSV output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a (policy x car count x seed) sweep and write aggregated KPIs.
    Sweep {
        /// Sweep spec file
        #[arg(long)]
        spec: PathBuf,
        /// Aggregated CSV output path
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: one per core)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Generate a rectangular grid road map.
    Genmap {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Grid spacing in meters
        #[arg(long)]
        spacing: f64,
        /// Map file output path
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, seed, log, out } => cmd_run(&scenario, seed, log.as_deref(), &out),
        Command::Sweep { spec, out, workers } => cmd_sweep(&spec, &out, workers),
        Command::Genmap { rows, cols, spacing, out } => cmd_genmap(rows, cols, spacing, &out),
    }
}
