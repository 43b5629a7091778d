use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slice_assure_cli::{compare, exit_code, run, RunConfig};

#[derive(Parser)]
#[command(name = "slice-assure", version, about = "Network-slicing simulator with a proactive autoscaler")]
struct Cli {
    /// Only print errors
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV traces, summary.json and table.txt
    Run {
        /// Preset (setting1, setting2, setting3) or scenario file
        #[arg(long, default_value = "setting1")]
        scenario: String,
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// seasonal_naive or ewma
        #[arg(long)]
        forecaster: Option<String>,
        /// Use the over-provisioning ratio of preset setting 1, 2 or 3
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        setting: Option<u8>,
    },
    /// Side-by-side table of completed runs
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run {
            scenario,
            hours,
            seed,
            out,
            forecaster,
            setting,
        } => {
            let config = RunConfig {
                scenario,
                out,
                hours,
                seed,
                setting,
                forecaster,
            };
            run(&config).map(|o| {
                if !cli.quiet {
                    print!("{}", o.table);
                }
            })
        }
        Command::Compare { runs } => compare(&runs).map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
