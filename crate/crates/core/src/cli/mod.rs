//! Batch front end: decode task files, run ranking benchmarks and compute
//! metric reports. The `futuregen` binary is a thin wrapper over [`run`].

mod config;
mod decode;
mod report;

pub use config::{
    BackendSection, DecoderSection, NgramSection, Overrides, RemoteSection, RunConfig,
    ScorerSection,
};
pub use decode::{run_decode, TaskRecord};
pub use report::{run_eval, run_rank};

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::eval::PairKind;

#[derive(Debug, Parser)]
#[command(name = "futuregen", version, about = "Constraint-guided decoding toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every task in a JSONL file.
    Decode(DecodeArgs),
    /// Ranking accuracy of the configured scorer on a pairs file.
    Rank(RankArgs),
    /// Metric reports over decode outputs, or a lambda sweep.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Remote backend url; overrides the config file and BACKEND_URL.
    #[arg(long)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-record work.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// JSONL task records.
    pub input: PathBuf,
    /// Write per-step beam traces as JSONL.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// JSONL ranking pairs.
    pub pairs: PathBuf,
    /// Keep only pairs of this kind (sentence or prefix).
    #[arg(long, value_parser = parse_pair_kind)]
    pub kind: Option<PairKind>,
    /// Tie tolerance; overrides `scorer.epsilon`.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Decode output JSONL.
    pub outputs: Option<PathBuf>,
    /// Task records holding prompts and references, matched by id.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long)]
    pub coverage: bool,
    /// Count inflected forms as concept matches.
    #[arg(long)]
    pub stem: bool,
    /// Distinct-n for each given n.
    #[arg(long, value_delimiter = ',')]
    pub distinct: Vec<usize>,
    /// Substring recall of reference answers.
    #[arg(long)]
    pub recall: bool,
    /// Word list scoring toxicity, one word (and optional weight) per line.
    #[arg(long)]
    pub toxicity_lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Decode the reference tasks at each lambda of a comma-separated grid.
    #[arg(long, num_args = 0..=1, default_missing_value = "0,1,2,3,4,5,6,7,8,9,10")]
    pub sweep: Option<String>,
}

fn parse_pair_kind(s: &str) -> Result<PairKind, String> {
    match s {
        "sentence" => Ok(PairKind::Sentence),
        "prefix" => Ok(PairKind::Prefix),
        _ => Err(format!("expected sentence or prefix, got {s:?}")),
    }
}

/// Runs a parsed command line. Returns the process exit code; errors map to
/// exit code 1.
pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Decode(a) => run_decode(&a),
        Command::Rank(a) => run_rank(&a),
        Command::Eval(a) => run_eval(&a),
    }
}

/// Loads the config named by `--config` (or an empty one) and applies the
/// flag overrides.
pub fn load_config(shared: &SharedArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &shared.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("", Path::new("."))?,
    };
    cfg.apply(&Overrides {
        backend_url: shared.backend_url.clone(),
        lambda: shared.lambda,
        beam: shared.beam,
        seed: shared.seed,
        out: None,
    });
    Ok(cfg)
}

fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot start worker threads")
}

/// Rounds to 6 significant digits; non-finite values become null.
pub fn round6(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
}

/// Applies [`round6`] to every float inside `v`.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => round6(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn read_text(path: &Path, what: &str) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

/// Writes `text` to `path`, or to stdout when there is no path.
fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
