use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chlimit::scenario::{load_config, run_scenario};

#[derive(Parser)]
#[command(name = "chlimit", version, about = "Viscous Cahn-Hilliard solver and vanishing-diffusion studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory: trajectory.csv and y_XXXX.csv snapshots.
    Run { config: PathBuf },
    /// δ-sweep against the limit problem: sweep.csv and ratefit.txt.
    Sweep { config: PathBuf },
    /// Continuous-dependence check: depcheck.csv.
    Depcheck { config: PathBuf },
    /// Manufactured-solution order study: mms.csv.
    Mms { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("CHLIMIT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = chlimit::scenario::limit_threads(n) {
                    eprintln!("chlimit: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("chlimit: CHLIMIT_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let (expected, path) = match &cli.command {
        Command::Run { config } => ("single", config),
        Command::Sweep { config } => ("sweep", config),
        Command::Depcheck { config } => ("depcheck", config),
        Command::Mms { config } => ("mms", config),
    };
    let mut scenario = match load_config(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("chlimit: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if scenario.run.name() != expected {
        eprintln!(
            "chlimit: {} has run kind '{}', not '{expected}'",
            path.display(),
            scenario.run.name()
        );
        return ExitCode::from(2);
    }
    if let Some(out) = cli.out {
        scenario.output = out;
    }
    match run_scenario(&scenario) {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match outcome.first_failure() {
                None => ExitCode::SUCCESS,
                Some(c) => {
                    eprintln!("chlimit: check '{}' failed", c.name);
                    ExitCode::FAILURE
                }
            }
        }
        Err(e) => {
            eprintln!("chlimit: {e}");
            ExitCode::FAILURE
        }
    }
}
