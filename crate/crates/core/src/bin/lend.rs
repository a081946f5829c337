use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lend::experiment::{evaluate_checkpoint, generate_datasets, run_experiment, ExperimentConfig};
use lend::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "lend", about = "Label-noise dilution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method and write metrics, checkpoints and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the configured synthetic train/test datasets.
    Gen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report clean-label accuracy of a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    ExitCode::from(match err.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    })
}

fn configure_threads() {
    let threads = std::env::var("LEND_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = threads.filter(|&n| n > 0) {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let report = run_experiment(&cfg, &out)?;
            print!("{}", report.summary_table());
            for r in &report.reports {
                println!("{}: {} , {}", r.method, r.metrics_path.display(), r.checkpoint_path.display());
            }
        }
        Command::Gen { config } => {
            let cfg = ExperimentConfig::load(&config, None)?;
            let (train, test) = generate_datasets(&cfg)?;
            println!("wrote {} and {}", train.display(), test.display());
        }
        Command::Eval { checkpoint, data } => {
            let acc = evaluate_checkpoint(&checkpoint, &data)?;
            println!("accuracy {acc}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
