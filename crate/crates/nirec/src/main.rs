//! Command-line front end for the staged steering-experiment pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nirec::pipeline::{
    cmd_prepare, cmd_report, cmd_run, cmd_simulate, cmd_steer, cmd_synth, cmd_train, RunConfig,
};

#[derive(Parser)]
#[command(name = "nirec", version, about = "Neighbor-influence steering experiments")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "nirec.toml")]
    config: PathBuf,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the steering sweep (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic raw corpus into <out>/raw/.
    Synth,
    /// Load and k-core filter the raw corpus into a dataset.
    Prepare,
    /// Build the ground-truth world, exposure, feedback, and target specs.
    Simulate,
    /// Fit the interference estimator, experience model, and baselines.
    Train,
    /// Sweep every method over the target specs and penalty grid.
    Steer,
    /// Aggregate the sweep into tables and trade-off charts.
    Report,
    /// All stages in order.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Ignore "already initialized": only the first build_global wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let outcome = RunConfig::load(&cli.config, cli.seed, cli.out.as_deref()).and_then(|cfg| {
        match cli.command {
            Command::Synth => cmd_synth(&cfg).map(|_| ()),
            Command::Prepare => cmd_prepare(&cfg).map(|_| ()),
            Command::Simulate => cmd_simulate(&cfg).map(|_| ()),
            Command::Train => cmd_train(&cfg).map(|_| ()),
            Command::Steer => cmd_steer(&cfg).map(|_| ()),
            Command::Report => cmd_report(&cfg).map(|_| ()),
            Command::Run => cmd_run(&cfg).map(|_| ()),
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
