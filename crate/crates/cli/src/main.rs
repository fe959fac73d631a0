use std::path::PathBuf;
use std::process::ExitCode;

use agfem_cli::{execute, load, CliError, Experiment, RunDescriptor};
use clap::{Parser, Subcommand, ValueEnum};

/// Aggregated unfitted finite elements on adaptive quadtrees.
///
/// Set AGFEM_THREADS to limit the worker threads.
#[derive(Parser)]
#[command(name = "agfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON file.
    Run {
        descriptor: PathBuf,
        /// Overrides the descriptor's output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print a descriptor with default values.
    Template {
        #[arg(value_enum)]
        experiment: ExperimentArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Converge,
    SweepCut,
    PartitionCheck,
    Eta0Sweep,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Converge => Experiment::Converge,
            ExperimentArg::SweepCut => Experiment::SweepCut,
            ExperimentArg::PartitionCheck => Experiment::PartitionCheck,
            ExperimentArg::Eta0Sweep => Experiment::Eta0Sweep,
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("AGFEM_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("AGFEM_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run { descriptor, output } => {
            let d = load(&descriptor, output)?;
            for f in execute(&d)? {
                println!("{}", f.display());
            }
        }
        Command::Template { experiment } => println!("{}", RunDescriptor::new(experiment.into()).to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agfem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
