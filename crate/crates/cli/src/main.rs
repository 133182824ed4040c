use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcm_cli::{execute, exit, output::flag_list, Overrides, Verb};

#[derive(Parser)]
#[command(name = "dcm", version, about = "Discrete chi-square period search")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full search, refinement and bootstrap for one model
    Run(Common),
    /// Lomb-Scargle pre-whitening baseline
    Dft(Common),
    /// Fisher-test ladder over the `models` list
    Ladder(Common),
    /// Prediction test with the `split` key
    Predict(Common),
    /// Write a simulated data file
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Control file
    #[arg(long)]
    control: PathBuf,
    /// Worker threads; overrides `workers`
    #[arg(long)]
    workers: Option<usize>,
    /// Seed; overrides `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 1 when the result carries instability flags
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, common) = match cli.verb {
        Command::Run(c) => (Verb::Run, c),
        Command::Dft(c) => (Verb::Dft, c),
        Command::Ladder(c) => (Verb::Ladder, c),
        Command::Predict(c) => (Verb::Predict, c),
        Command::Simulate(c) => (Verb::Simulate, c),
    };
    let overrides = Overrides {
        workers: common.workers,
        seed: common.seed,
    };
    let code = match execute(verb, &common.control, overrides) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.flags.is_empty() {
                exit::SUCCESS
            } else {
                eprintln!("instability flags: {}", flag_list(&outcome.flags));
                if common.strict {
                    exit::INSTABILITY
                } else {
                    exit::SUCCESS
                }
            }
        }
        Err(e) => {
            eprintln!("dcm: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
