//! Command-line front end: one subcommand per pipeline stage.
//!
//! Each stage writes its artifact plus a `<command>.manifest.json` into the
//! output directory. Exit codes: 0 success, 1 data error, 2 backend error,
//! 3 configuration error.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{BackendKind, FileConfig, RunConfig, Stage};
pub use manifest::{sha256_file, sha256_hex, Manifest};

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::extraction::ExtractionError;
use crate::gateway::{GatewayError, TextGenBackend};
use crate::personalization::PersonalizationError;
use crate::scoring::ScoringError;

/// Names of the files the stages write.
pub mod artifacts {
    pub const SYSTEM_ASPECTS: &str = "system_aspects.jsonl";
    pub const EXTRACTIONS: &str = "extractions.jsonl";
    pub const UTILITIES: &str = "utilities.jsonl";
    pub const PROFILES: &str = "profiles.jsonl";
    pub const PROFILES_DEV: &str = "profiles_dev.jsonl";
    pub const RANKINGS: &str = "rankings.jsonl";
    pub const EVAL_REPORT: &str = "eval_report.json";
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Fixture { .. } | GatewayError::InvalidRequest(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<ExtractionError> for CliError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::Gateway(g) => g.into(),
            ExtractionError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PersonalizationError> for CliError {
    fn from(e: PersonalizationError) -> Self {
        match e {
            PersonalizationError::Gateway(g) => g.into(),
            PersonalizationError::MismatchedAspect { .. } => CliError::Backend(e.to_string()),
            PersonalizationError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::Gateway(g) => g.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Gateway(g) => g.into(),
            EvalError::Scoring(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Flags shared by every subcommand. Flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub domain: Option<String>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 0shot, fixed or dynamic; applies to extract and classify-utility.
    #[arg(long)]
    pub mode: Option<String>,
    /// primary or primary+secondary.
    #[arg(long)]
    pub layers: Option<String>,
    /// Output directory. Defaults to runs/<run id prefix>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    /// Cassette for the scripted backend.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Save every model exchange of this run to a cassette.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Prompt fixture root.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "atars",
    version,
    about = "Atypical-aspect recommender pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw corpus directory and write it in canonical form.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// Extract atypical aspects from every review.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Labelled sentence bank for dynamic mode. Built from the corpus if absent.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Classify the utility of aspects for users.
    ClassifyUtility {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding the extract stage's output.
        #[arg(long)]
        extractions: PathBuf,
        /// Triplet bank for dynamic mode. Built from accepted HITs if absent.
        #[arg(long)]
        utility_bank: Option<PathBuf>,
    },
    /// Generate synthetic user profiles from the corpus's aspects.
    GenProfiles {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "u")]
        prefix: String,
        /// Trailing profiles written separately as a dev split.
        #[arg(long, default_value_t = 0)]
        dev: usize,
    },
    /// Re-rank the items matching each query for each assigned user.
    Rank {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: PathBuf,
        /// utilities.jsonl from classify-utility.
        #[arg(long)]
        utilities: PathBuf,
        /// One of plain-seren, plain-sur, star-seren, star-sur, star-only. All if absent.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Compute metrics and ranking correlations into eval_report.json.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: Option<PathBuf>,
        #[arg(long)]
        utilities: Option<PathBuf>,
        /// rankings.jsonl to compare against --reference.
        #[arg(long, requires = "reference")]
        rankings: Option<PathBuf>,
        #[arg(long, requires = "rankings")]
        reference: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, None)
}

/// Like [`run`], but model calls go to `text` instead of the backend named
/// in the flags or config. Embeddings still follow the config.
pub fn run_with<I, T>(args: I, text: Option<Arc<dyn TextGenBackend>>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match commands::dispatch(cli.command, text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary: sets up logging from `RUST_LOG` and runs.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os())
}
