use std::path::PathBuf;
use std::process::ExitCode;

use apgnc_core::experiment::{cmd_check, cmd_compare, cmd_run, RunOptions, CONFIG_HELP};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "apgnc", version, about = "Run proximal gradient experiments from a config file")]
#[command(after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (solver, seed) pair and write one trace CSV each plus summary.txt
    Run {
        config: PathBuf,
        /// Output directory, overrides [output] dir
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed list with a single seed
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Align traces on a pass grid and write compare.csv
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run the invariant check suite
    Check {
        /// Also run the rate-fit checks
        #[arg(long)]
        full: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, seed_override } => cmd_run(&config, &RunOptions { out_dir: out, seed_override }),
        Command::Compare { config, out, seed_override } => {
            cmd_compare(&config, &RunOptions { out_dir: out, seed_override })
        }
        Command::Check { full } => cmd_check(full),
    };
    ExitCode::from(code as u8)
}
