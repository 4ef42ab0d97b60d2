use clap::{Parser, Subcommand};
use regmod::harness::{self, ExperimentConfig, ExperimentKind};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "regmod", version, about = "Sparse recovery with partial support and value priors: experiments and single solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's outPath, else the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// T1 conditions and normalized bounds across n.
    Table1(Common),
    /// Mean N-RMSE of the estimator family across miss fractions.
    ReconCompare(Common),
    /// T1/T2/T3 bounds against realized errors.
    BoundCompare(Common),
    /// Recursive recovery of a synthetic sequence.
    DynamicDemo(Common),
    /// One estimator on a serialized instance; prints JSON.
    SolveOne(Common),
}

fn run(kind: ExperimentKind, args: Common) -> Result<(), harness::HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.experiment != kind {
        return Err(harness::HarnessError::Config(format!(
            "config is for '{}' but the '{}' subcommand was used",
            cfg.experiment.id(),
            kind.id()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let started = Instant::now();
    let artifacts = harness::run_experiment(&cfg, args.threads)?;
    if kind == ExperimentKind::SolveOne && args.out.is_none() && cfg.out_path.is_none() {
        println!("{}", serde_json::to_string_pretty(&artifacts.summary).expect("serializable"));
        return Ok(());
    }
    let dir = args
        .out
        .or_else(|| cfg.out_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    for path in harness::write_artifacts(&dir, &cfg, &artifacts, started.elapsed().as_millis())? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Table1(a) => (ExperimentKind::Table1, a),
        Command::ReconCompare(a) => (ExperimentKind::ReconCompare, a),
        Command::BoundCompare(a) => (ExperimentKind::BoundCompare, a),
        Command::DynamicDemo(a) => (ExperimentKind::DynamicDemo, a),
        Command::SolveOne(a) => (ExperimentKind::SolveOne, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
