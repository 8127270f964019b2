use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forest_mixture::cli::{oracle, run, with_threads, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fmvi", about = "Forest-mixture variational inference experiments")]
struct Args {
    /// Directory for traces and summaries; overrides `output_path` in the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for the parallel update phases.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithms and write one CSV trace per algorithm.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the exact optimum of the configured problem.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = with_threads(args.threads.max(1), || -> forest_mixture::Result<()> {
        let out = args.output_dir.as_deref();
        match &args.command {
            Command::Run { config } => {
                let report = run(&ExperimentConfig::from_path(config)?, out)?;
                println!("wrote {}", report.summary_path.display());
            }
            Command::Oracle { config } => {
                let report = oracle(&ExperimentConfig::from_path(config)?, out)?;
                println!("wrote {}", report.path.display());
            }
        }
        Ok(())
    })
    .and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
