//! Command-line front end: corpus generation, rule labeling, model
//! training, evaluation and labeler comparison.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use labeler_core::eval::METRIC_REPORT_VERSION;
use labeler_core::model::CHECKPOINT_VERSION;
use labeler_core::schema::SCHEMA_VERSION;

pub use commands::{ScoreRecord, TrainSettings, TrainSummary, OUTPUT_VERSION};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub enum CliError {
    /// Flags that are individually valid but do not fit together.
    Usage(String),
    /// Unreadable or malformed input.
    Data(labeler_core::Error),
    /// A broken internal invariant.
    Internal(String),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Usage(_) => ExitStatus::Usage,
            CliError::Data(_) => ExitStatus::Data,
            CliError::Internal(_) => ExitStatus::Internal,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<labeler_core::Error> for CliError {
    fn from(e: labeler_core::Error) -> Self {
        match e {
            labeler_core::Error::Dimension { .. } => CliError::Internal(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "report-labeler", about = "Label German chest radiograph reports with 14 findings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known labels.
    Generate(GenerateArgs),
    /// Label a dataset with the rule-based labeler.
    LabelRules(LabelRulesArgs),
    /// Label a dataset with a trained checkpoint.
    LabelModel(LabelModelArgs),
    /// Train the multi-head model under one regime.
    Train(TrainArgs),
    /// Score predictions against reference labels.
    Evaluate(EvaluateArgs),
    /// Evaluate two labelers side by side on the same references.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator settings (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Template bank (JSON); the built-in German bank when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the paraphrase (vocabulary mismatch) rate.
    #[arg(long)]
    pub mismatch_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LabelRulesArgs {
    /// Lexicon (JSON); the built-in German lexicon when omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-finding presence probabilities (JSONL) for AUC.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Supervised,
    Weak,
    Hybrid,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    /// Share of the manual splits to use: 25, 50, 75 or 100.
    #[arg(long, value_parser = ["25", "50", "75", "100"])]
    pub fraction: Option<String>,
    /// Rule-labeled reports.
    #[arg(long)]
    pub weak: Option<PathBuf>,
    /// Manually labeled reports.
    #[arg(long)]
    pub manual: Option<PathBuf>,
    /// Encoder, normalizer, optimizer and split settings (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed of the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Number of bootstrap resamples for confidence intervals.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub bootstrap: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Presence scores (JSONL from `label-model --scores`) enabling AUC.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Include ROC points in the JSON output (requires --scores).
    #[arg(long, requires = "scores")]
    pub roc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelerArg {
    Rule,
    Model,
}

impl LabelerArg {
    pub fn name(self) -> &'static str {
        match self {
            LabelerArg::Rule => "rule",
            LabelerArg::Model => "model",
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Exactly two labelers, e.g. `rule,model`.
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_value = "rule,model")]
    pub labelers: Vec<LabelerArg>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub bootstrap: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn version_string() -> String {
    format!(
        "{} (label schema v{SCHEMA_VERSION}, checkpoint format v{CHECKPOINT_VERSION}, metric report v{METRIC_REPORT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. JSON results go to `stdout`; tables and
/// diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = Cli::command().version(version_string()).try_get_matches_from(args);
    let cli = match matches.and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    ExitStatus::Success as i32
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    ExitStatus::Usage as i32
                }
            };
        }
    };
    match commands::execute(cli.command, stdout, stderr) {
        Ok(()) => ExitStatus::Success as i32,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.status() as i32
        }
    }
}

/// Caps the global worker pool at `REPORT_LABELER_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("REPORT_LABELER_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("REPORT_LABELER_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}
