use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exchange_econ::{cmd_region, cmd_run, cmd_verify, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "exchange-econ", version, about = "Simulate cooperative exchange economies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample the cooperative and independent demand regions.
    Region {
        scenario: PathBuf,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long, default_value = "region.csv")]
        out: PathBuf,
    },
    /// Cross-check the solvers against brute-force oracles.
    Verify { scenario: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let summary = cmd_run(&scenario, &RunOptions { out_dir: out.clone(), seed })?;
            println!(
                "{} run(s), mean time-average backlog {:.4}, outputs in {}",
                summary.runs.len(),
                summary.mean_time_avg_backlog,
                out.display()
            );
            if !summary.all_checks_pass {
                log::warn!("some summary checks failed; see summary.json");
            }
        }
        Command::Region { scenario, directions, out } => {
            let samples = cmd_region(&scenario, directions, &out)?;
            println!("{} directions written to {}", samples.len(), out.display());
        }
        Command::Verify { scenario } => {
            let outcomes = cmd_verify(&scenario)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
