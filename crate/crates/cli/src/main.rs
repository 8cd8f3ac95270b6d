//! `dermclass`: the skin-image classification pipeline as subcommands.
//!
//! Every subcommand writes its artifacts plus a `run.json` (config, seed,
//! SHA-256 digests of inputs and outputs) to a run directory. Failures print
//! `error: <class>` on the first line of stderr and exit with 2
//! (bad-argument), 3 (data-error) or 4 (numeric-failure).

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "dermclass",
    version,
    about = "Skin disease and lesion-tag classification pipeline"
)]
struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exact output directory (default: <runs-root>/<timestamp>-seed<seed>).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value = "runs")]
    runs_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge diagnosis names across atlases and deduplicate lesion tags.
    Merge(commands::MergeArgs),
    /// Validate a manifest and apply label maps.
    Ingest(commands::IngestArgs),
    /// Assign records to k folds or to an atlas-based train/test split.
    Split(commands::SplitArgs),
    /// Generate a synthetic dataset.
    Synth(commands::SynthArgs),
    /// Train from scratch or fine-tune a checkpoint.
    Train(commands::TrainArgs),
    /// Fit the multi-label threshold function.
    Calibrate(commands::CalibrateArgs),
    /// Compute top-k accuracy, MAP, confusion matrix and macro P/R/F.
    Eval(commands::EvalArgs),
    /// Nearest-neighbour retrieval on penultimate-layer features.
    Retrieve(commands::RetrieveArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => config::FileConfig::default(),
    };
    let ctx = Context {
        run_dir: cli.run_dir.as_deref(),
        runs_root: &cli.runs_root,
    };
    match cli.command {
        Command::Merge(a) => commands::merge(&ctx, a, file.merge),
        Command::Ingest(a) => commands::ingest(&ctx, a, file.ingest),
        Command::Split(a) => commands::split(&ctx, a, file.split),
        Command::Synth(a) => commands::synth(&ctx, a, file.synth),
        Command::Train(a) => commands::train(&ctx, a, file.train),
        Command::Calibrate(a) => commands::calibrate(&ctx, a, file.calibrate),
        Command::Eval(a) => commands::eval(&ctx, a, file.eval),
        Command::Retrieve(a) => commands::retrieve(&ctx, a, file.retrieve),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {}", e.class);
    eprintln!("{}", e.message);
    ExitCode::from(e.class.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::bad_argument(e.render().to_string().trim_end())),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
