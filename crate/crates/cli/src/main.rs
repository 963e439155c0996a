//! `onseg`: data generation, training, inference, evaluation and oracle checks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use onseg_core::eval::Delay;

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(
    name = "onseg",
    version,
    about = "Online and offline weakly supervised action segmentation"
)]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Dataset manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Directory receiving the outputs and the resolved-config record.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "info")]
    pub log_level: LogLevel,
    /// Worker threads for per-video work (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic multi-view dataset.
    GenData(GenDataArgs),
    /// Train the frame classifier on the training split.
    Train(TrainArgs),
    /// Write per-video label files.
    Infer(InferArgs),
    /// Score label files or a decoder against ground truth.
    Eval(EvalArgs),
    /// Semi-online metrics for a list of delays.
    SweepDelay(SweepArgs),
    /// Online accuracy at several observation endpoints.
    Progress(ProgressArgs),
    /// Compare the decoders with brute-force enumeration.
    OracleCheck(OracleArgs),
    /// Re-run the command recorded in a resolved-config file.
    Replay(ReplayArgs),
}

/// `START:END` as fractions of the video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number"))
}

impl FromStr for Span {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected START:END")?;
        Ok(Span {
            start: parse_fraction(a)?,
            end: parse_fraction(b)?,
        })
    }
}

/// `VIEW:START:END`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpan {
    pub view: usize,
    pub span: Span,
}

impl FromStr for ViewSpan {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (v, rest) = s.split_once(':').ok_or("expected VIEW:START:END")?;
        Ok(ViewSpan {
            view: v.trim().parse().map_err(|_| format!("{v:?} is not a view index"))?,
            span: rest.parse()?,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    /// Synchronized views per recording.
    #[arg(long)]
    pub views: Option<usize>,
    /// Actions other than background.
    #[arg(long)]
    pub actions: Option<usize>,
    /// Omit the background action.
    #[arg(long)]
    pub no_background: bool,
    #[arg(long)]
    pub transcripts: Option<usize>,
    #[arg(long)]
    pub min_transcript_len: Option<usize>,
    #[arg(long)]
    pub max_transcript_len: Option<usize>,
    /// Recordings per transcript.
    #[arg(long)]
    pub recordings: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Occlude view 0 over START:END.
    #[arg(long, value_name = "START:END")]
    pub occlude_anchor: Option<Span>,
    /// Occlude a view over a span; repeatable.
    #[arg(long, value_name = "VIEW:START:END")]
    pub occlude: Vec<ViewSpan>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    Sv,
    Pi,
    Wpi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidSet {
    /// Every segment relabeled.
    All,
    /// At least one segment relabeled.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvDurations {
    PerView,
    Shared,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Pseudo-label inference scheme.
    #[arg(long, value_enum, default_value = "single")]
    pub mode: Mode,
    /// Online-offline discrepancy loss.
    #[arg(long, value_enum, default_value = "on")]
    pub oodl: Switch,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Step size; each video's step is LR / T.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Confidence-network step size (wpi only).
    #[arg(long)]
    pub confidence_lr: Option<f64>,
    /// Freeze the confidence network at its initialization (wpi only).
    #[arg(long)]
    pub freeze_confidence: bool,
    #[arg(long, value_enum, default_value = "all")]
    pub invalid_set: InvalidSet,
    #[arg(long, value_enum, default_value = "per-view")]
    pub sv_durations: SvDurations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Online,
    Offline,
    Greedy,
    Semi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DecoderArgs {
    #[arg(long, value_enum, default_value = "online")]
    pub decoder: DecoderKind,
    /// Semi-online delay: frames (`12`) or a fraction of the video (`T/4`, `0.25T`, `T`).
    #[arg(long, required_if_eq("decoder", "semi"))]
    pub delay: Option<Delay>,
    /// Greedy sliding-window width in frames; 1 is the per-frame argmax.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Directory of `<id>.txt` label files to score.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub pred_dir: Option<PathBuf>,
    /// Decode with this checkpoint instead of reading label files.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated delays in ascending order.
    #[arg(long, value_delimiter = ',', default_value = "0,T/4,T/2,T")]
    pub delays: Vec<Delay>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProgressArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated observation endpoints in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1")]
    pub endpoints: Vec<f64>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 500)]
    pub instances: usize,
    #[arg(long, default_value_t = 10)]
    pub max_t: usize,
    #[arg(long, default_value_t = 4)]
    pub max_actions: usize,
    #[arg(long, default_value_t = 3)]
    pub max_transcripts: usize,
    #[arg(long, default_value_t = 3)]
    pub max_transcript_len: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A `*.config.json` file written by an earlier run.
    pub config: PathBuf,
}

/// Exits with a usage error (status 2) unless the global flag is present.
pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> &'a T {
    match value {
        Some(v) => v,
        None => Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                format!("this subcommand requires --{flag}"),
            )
            .exit(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
