use clap::{Parser, Subcommand};
use judgelab::{ExperimentConfig, LabError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Judge training with learned data reweighting, and best-of-N selection
/// on synthetic program corpora.
#[derive(Parser)]
#[command(name = "judgelab", version)]
struct Cli {
    /// Config file: `key = value` lines with `[section]` headers, or JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives run directories (default `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the lower, meta and test pools.
    Gen,
    /// Train a judge; generates the corpus from the config unless --corpus is given.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Compare selection methods on the configured pool.
    Select {
        /// checkpoint.json or a train run directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train and score every objective × strategy cell on one corpus.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Emit tidy CSVs for plotting from a train or ablate run directory.
    Report { run_dir: PathBuf },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    Ok(ExperimentConfig::load(
        cli.config.as_deref(),
        cli.seed,
        cli.out.as_deref(),
    )?)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, LabError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Usage(format!("--threads {n}: {e}")))?;
    }
    let dir = |r: judgelab::RunDir| vec![r.path];
    match &cli.command {
        Command::Gen => Ok(dir(judgelab::gen(&load(&cli)?)?)),
        Command::Train { corpus } => Ok(dir(judgelab::train(&load(&cli)?, corpus.as_deref())?)),
        Command::Select { checkpoint, corpus } => Ok(dir(judgelab::select(
            &load(&cli)?,
            checkpoint.as_deref(),
            corpus.as_deref(),
        )?)),
        Command::Ablate { corpus } => Ok(dir(judgelab::ablate(&load(&cli)?, corpus.as_deref())?)),
        Command::Report { run_dir } => judgelab::report(Path::new(run_dir)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dirs) => {
            for d in dirs {
                println!("{}", d.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
