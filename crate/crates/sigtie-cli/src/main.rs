//! Command-line pipeline for significant-tie detection in temporal
//! transaction networks: ingest -> estimate -> test -> analyze, plus a
//! synthetic generator and a Monte Carlo power harness.
//!
//! Stages hand data over through files in the artifact directory and every
//! stage writes a manifest (resolved config + input digests), so a run can
//! be reproduced bit for bit. Exit codes: 0 success, 1 usage error, 2 data
//! or configuration error, 3 non-convergence under --strict.

mod manifest;
mod stages;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use stages::{Ctx, NonConverged};

#[derive(Parser)]
#[command(
    name = "sigtie",
    version,
    about = "Detect relationship lending as statistically significant ties"
)]
struct Cli {
    /// Artifact directory for stage inputs and outputs.
    #[arg(long, global = true, default_value = ".")]
    dir: PathBuf,
    /// Worker threads (0 = all cores). Changes wall time, never output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit with status 3 when an estimate fails to converge.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse transactions, build daily snapshots and windowed counts.
    Ingest(stages::IngestArgs),
    /// Fit activity levels by maximum likelihood.
    Estimate(stages::EstimateArgs),
    /// Run edge and node significance tests.
    Test(stages::TestArgs),
    /// Aggregate per-window classification fractions.
    Report,
    /// Decompose tie classifications into duration spells and fit hazards.
    Duration(stages::DurationArgs),
    /// Count triangles by number of significant ties.
    Triangles(stages::VariantArgs),
    /// Compare baseline measures (RL, LPI) against significant ties.
    Compare(stages::VariantArgs),
    /// Contrast detrended rates and loan sizes across tie classes.
    Rates(stages::VariantArgs),
    /// Split ties and dependent banks by bank nationality.
    Nationality(stages::NationalityArgs),
    /// Generate a synthetic core-periphery network with planted pairs.
    Simulate(stages::SimulateArgs),
    /// Monte Carlo power study over a grid of generator settings.
    Power(stages::PowerArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        if err.downcast_ref::<NonConverged>().is_some() {
            eprintln!("error: {err:#}");
            std::process::exit(3);
        }
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let file = match &cli.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            body.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    std::fs::create_dir_all(&cli.dir)
        .with_context(|| format!("creating {}", cli.dir.display()))?;
    let ctx = Ctx {
        dir: cli.dir.clone(),
        strict: cli.strict,
        file,
    };
    match &cli.command {
        Command::Ingest(args) => stages::run_ingest(&ctx, args),
        Command::Estimate(args) => stages::run_estimate(&ctx, args),
        Command::Test(args) => stages::run_test(&ctx, args),
        Command::Report => stages::run_report(&ctx),
        Command::Duration(args) => stages::run_duration(&ctx, args),
        Command::Triangles(args) => stages::run_triangles(&ctx, args),
        Command::Compare(args) => stages::run_compare(&ctx, args),
        Command::Rates(args) => stages::run_rates(&ctx, args),
        Command::Nationality(args) => stages::run_nationality(&ctx, args),
        Command::Simulate(args) => stages::run_simulate(&ctx, args),
        Command::Power(args) => stages::run_power(&ctx, args),
    }
}
