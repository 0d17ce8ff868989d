use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use manifold_mpc_cli::config::Overrides;
use manifold_mpc_cli::{list_scenarios, run};

#[derive(Parser)]
#[command(name = "manifold-mpc", version, about = "Run error-state MPC tracking scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (config files or bundled ids).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for traces and summaries.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Run independent scenarios in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// List bundled scenarios.
    ListScenarios {
        /// One id per line.
        #[arg(long)]
        ids: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::ListScenarios { ids } => list_scenarios(ids).map(|text| {
            print!("{text}");
            0
        }),
        Command::Run { configs, seed, out, horizon, duration, parallel } => {
            let flags = Overrides { seed, out, horizon, duration };
            run(&configs, &flags, parallel).map(|report| {
                for line in &report.lines {
                    println!("{line}");
                }
                report.exit_code
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
