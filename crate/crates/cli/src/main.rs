//! `wedgefield` command-line runner.
//!
//! Exit status: 0 success, 2 config error, 3 dense-budget refusal,
//! 4 gray-zone or conditioning failure, 5 other numerical failure, 6 I/O.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wedgefield_cli::{load, run, write_artifacts, CliError, Experiment, RunOptions};

#[derive(Parser)]
#[command(
    name = "wedgefield",
    version,
    about = "Dirac evolution, dressing and wedge-space experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free Dirac spectrum on the lattice.
    Spectrum(Flags),
    /// One propagator with dressing diagnostics.
    Evolve(Flags),
    /// Cutoff refinement of odd-block norms.
    Scan(Flags),
    /// Grid and trace-formula norms of the dressing operator.
    Qnorm(Flags),
    /// Lift rotation between dressed seas and its phase freedom.
    Lift(Flags),
    /// Gauge covariance under step refinement.
    Gauge(Flags),
    /// Randomized determinant, charge and CAR checks.
    WedgeSuite(Flags),
}

#[derive(Args)]
struct Flags {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set grid.n=128`. Repeatable.
    #[arg(long = "set", value_name = "K=V")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `wedgefield-out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Bytes allowed for dense operators.
    #[arg(long, value_name = "BYTES")]
    dense_budget: Option<u64>,
}

fn execute(exp: Experiment, f: Flags) -> Result<Vec<PathBuf>, CliError> {
    let bytes = std::fs::read(&f.config).map_err(|source| CliError::Io {
        context: f.config.clone(),
        source,
    })?;
    let mut sets = f.set;
    if let Some(s) = f.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(b) = f.dense_budget {
        sets.push(format!("dense_budget={b}"));
    }
    let (doc, cfg) = load(&bytes, &sets)?;
    let out = f
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("wedgefield-out").join(exp.as_str()));
    let art = run(exp, &cfg, &doc, &RunOptions { threads: f.threads })?;
    write_artifacts(&out, &art)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, flags) = match cli.command {
        Command::Spectrum(f) => (Experiment::Spectrum, f),
        Command::Evolve(f) => (Experiment::Evolve, f),
        Command::Scan(f) => (Experiment::Scan, f),
        Command::Qnorm(f) => (Experiment::Qnorm, f),
        Command::Lift(f) => (Experiment::Lift, f),
        Command::Gauge(f) => (Experiment::Gauge, f),
        Command::WedgeSuite(f) => (Experiment::WedgeSuite, f),
    };
    match execute(exp, flags) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
