//! `nutaxis`: run simulations, parameter sweeps and exponent analyses.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nutaxis", version, about = "Porous-medium nutrient-taxis simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write series.csv, report.json and snapshots.
    Simulate(SimulateArgs),
    /// Run a configuration over a grid of parameter values.
    Sweep(SweepArgs),
    /// Classify the bootstrap recurrence and locate its threshold.
    Exponent(ExponentArgs),
    /// Recompute the report from an existing series.csv.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 unless the convergence verdict is PASS.
    #[arg(long)]
    assert_convergence: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// `name=v1,v2,...` over a model coefficient; give at most two.
    #[arg(long = "axis", required = true)]
    axes: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    assert_convergence: bool,
}

#[derive(Debug, Args)]
struct ExponentArgs {
    /// Classify a single exponent.
    #[arg(long, conflicts_with_all = ["m_min", "m_max"])]
    m: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    m_min: f64,
    #[arg(long, default_value_t = 2.0)]
    m_max: f64,
    /// Number of interior sample points in (m_min, m_max).
    #[arg(long)]
    samples: Option<usize>,
    /// Bisect (m_min, m_max) for the divergence threshold.
    #[arg(long)]
    bisect: bool,
    /// Bisection bracket width.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    /// Write exponent.csv into this directory instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Configuration the series was produced with.
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `<out>/series.csv`.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Directory for report.json; prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    assert_convergence: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, a.out.as_deref(), a.assert_convergence),
        Command::Sweep(a) => commands::sweep(
            &a.config,
            &a.axes,
            a.out.as_deref(),
            a.threads,
            a.assert_convergence,
        ),
        Command::Exponent(a) => commands::exponent(commands::ExponentRequest {
            single: a.m,
            m_min: a.m_min,
            m_max: a.m_max,
            samples: a.samples,
            bisect: a.bisect,
            tol: a.tol,
            out: a.out,
        }),
        Command::Diagnose(a) => commands::diagnose(
            &a.config,
            a.series.as_deref(),
            a.out.as_deref(),
            a.assert_convergence,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(error::EXIT_USAGE),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nutaxis: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
