//! `dbarl2`: run a verification command from a JSON config and write a
//! JSON-lines report plus a CSV summary.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Identities,
    Conditions,
    Domains,
    Approx,
    Solve,
    Majorant,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Conditions => "conditions",
            Command::Domains => "domains",
            Command::Approx => "approx",
            Command::Solve => "solve",
            Command::Majorant => "majorant",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dbarl2", version, about = "Numerical checks for weighted L2 d-bar estimates")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Reports go to `<out>/<command>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let built = cfg.build().context("invalid config")?;
    let outcome = match cli.command {
        Command::Identities => commands::identities(&built),
        Command::Conditions => commands::conditions(&built),
        Command::Domains => commands::domains(&built),
        Command::Approx => commands::approx(&built),
        Command::Solve => commands::solve(&built),
        Command::Majorant => commands::majorant(&built),
    }?;
    output::write(&cli.out.join(cli.command.name()), &outcome)?;
    let failed: Vec<&str> = outcome
        .records
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.check_id.as_str())
        .collect();
    println!(
        "{}: {} checks, {} failed",
        cli.command.name(),
        outcome.records.len(),
        failed.len()
    );
    for id in &failed {
        println!("FAIL {id}");
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
