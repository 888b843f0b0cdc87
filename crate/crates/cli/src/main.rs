//! `semloc`: build semantic maps, render them and correct noisy camera poses.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for malformed input data.
const EXIT_DATA: u8 = 2;
/// Exit status when the pipeline ran but flagged a failure.
const EXIT_PIPELINE: u8 = 3;
const EXIT_USAGE: u8 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "semloc",
    version,
    about = "Semantic point-cloud mapping and camera pose correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file (`key = value` with `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core. Overrides the config.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fuse scan rounds into a static map, splat table and road offset field.
    BuildMap(commands::BuildMapArgs),
    /// Render label and depth maps from poses.
    Render(commands::RenderArgs),
    /// Generate a synthetic street dataset with noisy poses.
    Simulate(commands::SimulateArgs),
    /// Correct a single noisy pose.
    Localize(commands::LocalizeArgs),
    /// Correct a pose sequence: rectify, refine, smooth, re-render.
    Track(commands::TrackArgs),
    /// Merge a static render with object masks, sky and hole filling.
    FuseLabels(commands::FuseArgs),
    /// Pose and segmentation metrics.
    Evaluate(commands::EvaluateArgs),
    /// Repeat tracking under independent noise draws and report mean and SD.
    Trials(commands::TrialsArgs),
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// The command finished and wrote its outputs, but some frames failed.
#[derive(Debug)]
pub struct PipelineFailure(pub String);

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PipelineFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else if err.downcast_ref::<PipelineFailure>().is_some() {
        EXIT_PIPELINE
    } else if let Some(e) = err.downcast_ref::<semloc::Error>() {
        if e.is_data_error() {
            EXIT_DATA
        } else {
            EXIT_PIPELINE
        }
    } else {
        EXIT_DATA
    }
}

/// The error and its causes, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildMap(a) => commands::build_map(a),
        Command::Render(a) => commands::render(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Localize(a) => commands::localize(a),
        Command::Track(a) => commands::track(a),
        Command::FuseLabels(a) => commands::fuse_labels(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Trials(a) => commands::trials(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
