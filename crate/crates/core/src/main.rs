use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leaning::pipeline::{Run, RunConfig, Stage, StageError, OUTPUT_DIR_ENV};
use leaning::Error;

/// Unsupervised political-leaning inference pipeline.
///
/// Every subcommand reads a JSON run configuration and accepts flat
/// overrides such as `--seed 7 --classifier.epochs 5`. Artifacts go to
/// `paths.output_dir`, which the LEANING_OUTPUT_DIR environment variable
/// overrides.
#[derive(Parser)]
#[command(name = "leaning", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Configuration overrides as `--key value` pairs with dotted keys.
    #[arg(
        value_name = "--KEY VALUE",
        trailing_var_arg = true,
        allow_hyphen_values = true,
        num_args = 0..
    )]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(Common),
    /// Load and validate a corpus.
    Ingest(Common),
    /// Label users from their likes and split them.
    Groundtruth(Common),
    /// Train the tweet classifier on pivot timelines.
    Train(Common),
    /// Select enrichment tweets and retrain the classifier.
    Enrich(Common),
    /// Compute user vectors with the enriched classifier.
    Vectorize(Common),
    /// Project user vectors to the 2-D ideology space.
    Project(Common),
    /// Predict party and pole of the test users.
    Predict(Common),
    /// Score predictions and write reports and curves.
    Evaluate(Common),
    /// Run every stage in order.
    Pipeline(Common),
    /// Run the method roster and write a ranking table.
    Compare(Common),
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Validation(_) | Error::Parse { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got {arg:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                out.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(out)
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        config.paths.output_dir = PathBuf::from(dir);
    }
    config.with_overrides(&parse_overrides(&common.overrides)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (stage, common) = match &cli.command {
        Command::Synth(c) => (Some(Stage::Synth), c),
        Command::Ingest(c) => (Some(Stage::Ingest), c),
        Command::Groundtruth(c) => (Some(Stage::Groundtruth), c),
        Command::Train(c) => (Some(Stage::Train), c),
        Command::Enrich(c) => (Some(Stage::Enrich), c),
        Command::Vectorize(c) => (Some(Stage::Vectorize), c),
        Command::Project(c) => (Some(Stage::Project), c),
        Command::Predict(c) => (Some(Stage::Predict), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::Compare(c) => (Some(Stage::Compare), c),
        Command::Pipeline(c) => (None, c),
    };
    let run = match load_config(common).and_then(Run::new) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let result = match stage {
        Some(s) => run.run_stage(s),
        None => run.pipeline(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, error }) => {
            eprintln!("error: stage {} failed: {error}", stage.name());
            ExitCode::from(exit_code(&error))
        }
    }
}
