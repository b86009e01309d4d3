//! `ccl` command-line driver: corpora to pairs, embedding work orders,
//! stores, evaluations and rendered reports.

mod commands;
pub mod error;
mod meta;
pub mod render;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ccl_core::evalharness::ltp::{LtpEligibility, LtpMethod};
use ccl_core::evalharness::next::NextVariant;
use ccl_core::pairgen::PairMode;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub use error::{CliError, EXIT_FAILURE, EXIT_MALFORMED, EXIT_MISSING, EXIT_OK, EXIT_USAGE};
use render::ReportFormat;

/// `h_l:g_d`, e.g. `2:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StpCell {
    pub h_l: usize,
    pub g_d: usize,
}

/// `h_l:g_d:first_goal_in_distance`, e.g. `2:2:0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LtpCell {
    pub h_l: usize,
    pub g_d: usize,
    pub fgid: usize,
}

fn parse_fields<const N: usize>(s: &str, shape: &str) -> Result<[usize; N], String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != N {
        return Err(format!("expected {shape}, got {s:?}"));
    }
    let mut out = [0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("expected {shape}, got {s:?}"))?;
    }
    Ok(out)
}

impl FromStr for StpCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let [h_l, g_d] = parse_fields(s, "h_l:g_d")?;
        Ok(StpCell { h_l, g_d })
    }
}

impl fmt::Display for StpCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.h_l, self.g_d)
    }
}

impl FromStr for LtpCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let [h_l, g_d, fgid] = parse_fields(s, "h_l:g_d:fgid")?;
        Ok(LtpCell { h_l, g_d, fgid })
    }
}

macro_rules! serialize_as_display {
    ($($t:ty),*) => {$(
        impl serde::Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
    )*};
}

serialize_as_display!(StpCell, LtpCell);

impl fmt::Display for LtpCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.h_l, self.g_d, self.fgid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `.txt` is read as DailyDialog, anything else as JSONL.
    Auto,
    Dailydialog,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Deterministic random unit vectors.
    Mock,
    /// Look vectors up in an existing store.
    File,
}

#[derive(Debug, Parser)]
#[command(name = "ccl", version, about = "Curved contrastive planning and ranking engine")]
struct Cli {
    /// JSON object of flag values for the subcommand; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Evaluation threads (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge same-speaker turns, drop over-long dialogues, write canonical JSONL.
    Preprocess(PreprocessArgs),
    /// Generate curved training pairs.
    Pairgen(PairgenArgs),
    /// List every embedding key the configured evaluations need.
    EmbedRequests(EmbedRequestsArgs),
    /// Fulfil a request file into a store.
    Embed(EmbedArgs),
    /// Short-term planning evaluation.
    EvalStp(EvalStpArgs),
    /// Long-term planning evaluation.
    EvalLtp(EvalLtpArgs),
    /// Next-utterance selection evaluation.
    EvalNext(EvalNextArgs),
    /// Encoding cost of context encoders versus cached relativistic scores.
    BenchEncoding(BenchEncodingArgs),
    /// Render a report file as a table, CSV or plot series.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Pairgen(_) => "pairgen",
            Command::EmbedRequests(_) => "embed-requests",
            Command::Embed(_) => "embed",
            Command::EvalStp(_) => "eval-stp",
            Command::EvalLtp(_) => "eval-ltp",
            Command::EvalNext(_) => "eval-next",
            Command::BenchEncoding(_) => "bench-encoding",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct PreprocessArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    format: InputFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ccl_core::corpus::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    /// Apply the length filter before merging same-speaker turns.
    #[arg(long)]
    filter_before_merge: bool,
    /// Hold out the last N dialogues of every domain.
    #[arg(long, value_name = "N", requires = "heldout_out")]
    split_tail: Option<usize>,
    #[arg(long, value_name = "FILE", requires = "split_tail")]
    heldout_out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct PairgenArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "curved")]
    mode: PairMode,
    #[arg(long, default_value_t = ccl_core::pairgen::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random negatives per positive.
    #[arg(long, default_value_t = ccl_core::pairgen::DEFAULT_RANDOM_NEGATIVES)]
    negatives: usize,
    /// Drop exact duplicate rows.
    #[arg(long)]
    dedup: bool,
    /// Omit the `_meta` header line.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct EmbedRequestsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Request `[E]`/`[O]` before-vectors.
    #[arg(long)]
    speaker_mode: bool,
    /// STP cells, e.g. `2:1,5:3`.
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', requires = "candidates")]
    stp: Vec<StpCell>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// LTP cells, e.g. `2:2:0,2:2:3`.
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',')]
    ltp: Vec<LtpCell>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_value = "iec,iec-cu,gc")]
    ltp_methods: Vec<LtpMethod>,
    #[arg(long, default_value = "tables")]
    eligibility: LtpEligibility,
    /// Also write the built LTP samples here, for `eval-ltp --samples`.
    #[arg(long, value_name = "FILE")]
    ltp_samples_out: Option<PathBuf>,
    /// Next-utterance history lengths, e.g. `1,2,3`.
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',')]
    next: Vec<usize>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_value = "full,last")]
    next_variants: Vec<NextVariant>,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    encoder: EncoderKind,
    #[arg(long)]
    requests: PathBuf,
    /// Output store base path (`<out>.meta.jsonl` and `<out>.vec`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 384)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Source store for `--encoder file`.
    #[arg(long, value_name = "BASE", required_if_eq("encoder", "file"))]
    source: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct EvalStpArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', required = true)]
    cells: Vec<StpCell>,
    #[arg(long, value_name = "BASE")]
    store: PathBuf,
    #[arg(long)]
    speaker_mode: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct EvalLtpArgs {
    #[arg(long)]
    method: LtpMethod,
    #[arg(long, value_name = "BASE")]
    store: PathBuf,
    /// Samples written by `embed-requests --ltp-samples-out`.
    #[arg(long, conflicts_with_all = ["corpus", "cells"])]
    samples: Option<PathBuf>,
    #[arg(long, requires = "cells")]
    corpus: Option<PathBuf>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', requires = "corpus")]
    cells: Vec<LtpCell>,
    #[arg(long, default_value = "tables")]
    eligibility: LtpEligibility,
    #[arg(long)]
    speaker_mode: bool,
    /// Weights of the first, second and third goal's history term.
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_value = "1,-0.5,-1", allow_hyphen_values = true)]
    weights: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct EvalNextArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Not needed for `--variant bm25`.
    #[arg(long, value_name = "BASE")]
    store: Option<PathBuf>,
    #[arg(long, action = clap::ArgAction::Set, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    h_l: Vec<usize>,
    #[arg(long, default_value = "full")]
    variant: NextVariant,
    #[arg(long)]
    speaker_mode: bool,
    #[arg(long, default_value_t = 1.5)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct BenchEncodingArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_h_l: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(args_override_self = true)]
struct ReportArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_tokens(path: &str) -> Result<Vec<OsString>, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(format!("config file {path}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| CliError::malformed(format!("config file {path}: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::malformed(format!("config file {path}: expected a JSON object")))?;
    let mut out = Vec::new();
    for (key, v) in obj {
        let flag = OsString::from(format!("--{}", key.replace('_', "-")));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(CliError::malformed(format!("config key {key:?}: unsupported value {other}"))),
        };
        match v {
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                out.push(flag);
                out.push(joined.into());
            }
            other => {
                out.push(flag);
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Splice `--config` file values in right after the subcommand name, so
/// flags given on the command line come later and take precedence.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config = None;
    let mut sub_at = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).map(|p| p.to_string_lossy().into_owned());
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else if a == "--workers" {
            i += 1;
        } else if sub_at.is_none() && !a.starts_with('-') {
            sub_at = Some(i);
        }
        i += 1;
    }
    match (config, sub_at) {
        (Some(path), Some(at)) => {
            let mut out = argv[..=at].to_vec();
            out.extend(config_tokens(&path)?);
            out.extend_from_slice(&argv[at + 1..]);
            Ok(out)
        }
        _ => Ok(argv),
    }
}

/// Run the CLI on `argv` (including the program name) and return the exit
/// code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    eprintln!("hint: run `ccl <command> --help` for the accepted flags");
                    EXIT_USAGE
                }
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.map_or(0, usize::from))
        .build()
    {
        Ok(p) => p,
        Err(e) => return fail(CliError::new(EXIT_FAILURE, e)),
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> i32 {
    eprintln!("error: {:#}", e.error);
    e.code
}
