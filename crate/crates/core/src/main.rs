use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poincare::cli::{config_schema, run_sharp, run_sweep, run_verify, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "wpoincare", version, about = "Check weighted Poincaré inequalities on discretized balls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured inequality check.
    Verify(RunArgs),
    /// Estimate sharp constants and compare with the explicit ones.
    Sharp(RunArgs),
    /// Tabulate energies and robust-inequality ratios over (s, R).
    Sweep(RunArgs),
    /// Print the JSON schema of the configuration file.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suite seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (RunArgs, fn(&ExperimentConfig, &RunOptions) -> poincare::Result<_>) =
        match cli.command {
            Command::Schema => {
                println!("{}", serde_json::to_string_pretty(&config_schema()).expect("static schema"));
                return ExitCode::SUCCESS;
            }
            Command::Verify(a) => (a, run_verify),
            Command::Sharp(a) => (a, run_sharp),
            Command::Sweep(a) => (a, run_sweep),
        };
    let opts = RunOptions {
        out_dir: args.out,
        seed: args.seed,
        verbose: args.verbose,
    };
    let outcome = ExperimentConfig::from_path(&args.config).and_then(|c| run(&c, &opts));
    match outcome {
        Ok(summary) => {
            println!(
                "{} rows, {} failed -> {}",
                summary.rows,
                summary.failures,
                summary.csv.display()
            );
            if summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
