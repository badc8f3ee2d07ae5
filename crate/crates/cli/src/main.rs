use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wmmf_cli::{dispatch, load_with, write_artifacts, CliError, ExperimentKind, Overrides};

#[derive(Parser)]
#[command(name = "wmmf", version, about = "Weighted max-min fair flow-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and write the derived-constants ledger.
    Validate(Flags),
    /// Simulate trajectories and write them as CSV.
    Run(Flags),
    /// Estimate the drift of the norm from the configured initial states.
    Drift(Flags),
    /// Estimate how often the arrival regularity events fail.
    Eventset(Flags),
    /// Track the mean document count over time.
    Stability(Flags),
    /// Compare a single processor-sharing link with its closed form.
    PsBench(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the configured number of replications.
    #[arg(long, value_name = "K")]
    replications: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "P", value_parser = clap::value_parser!(u16).range(1..))]
    parallel: Option<u16>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Flags) {
        match self {
            Command::Validate(f) => (ExperimentKind::Validate, f),
            Command::Run(f) => (ExperimentKind::Run, f),
            Command::Drift(f) => (ExperimentKind::Drift, f),
            Command::Eventset(f) => (ExperimentKind::Eventset, f),
            Command::Stability(f) => (ExperimentKind::Stability, f),
            Command::PsBench(f) => (ExperimentKind::PsBench, f),
        }
    }
}

fn execute(kind: ExperimentKind, flags: Flags) -> Result<i32, CliError> {
    let overrides = Overrides {
        experiment: Some(kind),
        seed: flags.seed,
        replications: flags.replications,
        out: flags.out,
    };
    let config = load_with(&flags.config, &overrides)?;
    let outcome = match flags.parallel {
        Some(p) => rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(p))
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| dispatch(&config))?,
        None => dispatch(&config)?,
    };
    let written = write_artifacts(&config.outputs.dir, &outcome.artifacts)?;
    print!("{}", outcome.summary);
    println!("  seed {}", config.seed);
    for path in written {
        println!("  wrote {}", path.display());
    }
    println!("{}", if outcome.checks_passed { "checks passed" } else { "CHECKS FAILED" });
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let (kind, flags) = Cli::parse().command.split();
    let code = match execute(kind, flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
