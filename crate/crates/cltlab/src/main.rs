//! Thin command-line front end over the experiment registry.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cltlab::experiments::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "cltlab", version, about = "Seeded, self-checking simulation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config and write its reports.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the registered experiment names.
    List,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> cltlab::Result<bool> {
    match command {
        Command::List => {
            for name in experiments::registry() {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Run { config, seed, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut config: ExperimentConfig = serde_json::from_str(&text)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output_path = Some(out.display().to_string());
            }
            let report = experiments::run(&config)?;
            for c in &report.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {} (observed {:.6e}, bound {:.6e})", c.name, c.observed, c.bound);
            }
            match &config.output_path {
                Some(path) => experiments::write_report(&report, Path::new(path))?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(report.passed)
        }
    }
}
