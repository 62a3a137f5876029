use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wentzell::cli;

#[derive(Parser)]
#[command(name = "wentzell", version, about = "Implicit-Euler flows with dynamic flux boundary conditions")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `step.tolerance=1e-9` or `mode=convergence`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory (default: the config's `out`, else `./out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Echo metrics lines to stderr.
        #[arg(long)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        overrides,
        out,
        verbose,
    } = Args::parse().command;
    let cfg = match cli::read_config(&config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", cli::failure_json(&e));
            return ExitCode::from(cli::exit_code(&e) as u8);
        }
    };
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match cli::run(&cfg, &dir, verbose) {
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{}", cli::failure_json(&e));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
