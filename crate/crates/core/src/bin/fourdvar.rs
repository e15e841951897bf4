use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fourdvar::commands::{exit_code, run, Command, Overrides, Suite};

#[derive(Parser)]
#[command(name = "fourdvar", version, about = "4D-Var reanalysis engine and stochasticity lab")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ensemble size (overrides `lab.members`).
    #[arg(long, global = true)]
    members: Option<usize>,
    /// Master seed (overrides `master_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate the hidden truth.
    Truth,
    /// Sample observations of the truth.
    Observe,
    /// Run the reanalysis cycle for one member.
    Assimilate,
    /// Run the ensemble and export moments.
    Ensemble,
    /// Check properties; exit 1 on failure.
    Verify {
        #[arg(long, default_value = "all", value_parser = ["affine", "shift", "neighborhood", "errors", "covariance", "all"])]
        suite: String,
    },
    /// Summarise outputs already in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match &cli.command {
        Sub::Truth => Command::Truth,
        Sub::Observe => Command::Observe,
        Sub::Assimilate => Command::Assimilate,
        Sub::Ensemble => Command::Ensemble,
        Sub::Verify { suite } => Command::Verify(Suite::parse(suite).expect("validated by clap")),
        Sub::Report => Command::Report,
    };
    let overrides = Overrides {
        out: cli.out,
        members: cli.members,
        seed: cli.seed,
    };
    let result = run(command, &cli.config, &overrides);
    match &result {
        Ok(outcome) => outcome.lines.iter().for_each(|l| println!("{l}")),
        Err(e) => eprintln!("fourdvar {}: {e}", command.name()),
    }
    ExitCode::from(exit_code(&result) as u8)
}
