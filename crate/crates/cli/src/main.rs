//! Command-line driver: train reference models, paraphrase, infill, evaluate.

mod config;
mod eval;
mod failure;
mod generate;
mod io;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use refdec::TaskPreset;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "refdec", version, about = "Reflective decoding with a forward and a backward language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train forward and backward n-gram models on a line-per-document corpus.
    TrainLm(TrainArgs),
    /// Paraphrase every line of the input file.
    Paraphrase(GenerateArgs),
    /// Generate a bridging hypothesis for every `o1<TAB>o2` record.
    Infill(GenerateArgs),
    /// Score candidates against sources and references.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub forward_out: Option<PathBuf>,
    #[arg(long)]
    pub backward_out: Option<PathBuf>,
    /// n-gram order.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..=10))]
    pub order: Option<u16>,
    /// Add-k pseudo-count.
    #[arg(long)]
    pub smoothing_k: Option<f64>,
    /// Held-out documents for perplexity; defaults to every tenth corpus line.
    #[arg(long)]
    pub held_out: Option<PathBuf>,
    #[arg(long)]
    pub no_lowercase: bool,
    /// Keep punctuation attached to words.
    #[arg(long)]
    pub keep_punctuation: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub forward: Option<PathBuf>,
    #[arg(long)]
    pub backward: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Defaults to `<output>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Weight-learning traces.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(long)]
    pub novelty_threshold: Option<f64>,
    #[arg(long, value_parser = parse_preset)]
    pub task_preset: Option<TaskPreset>,
    /// Record every candidate and context in the manifest.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// One line per candidate; several references per line are tab-separated.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..=4))]
    pub max_ngram_order: Option<u16>,
    #[arg(long)]
    pub no_smoothing: bool,
    #[arg(long)]
    pub no_lowercase: bool,
    #[arg(long)]
    pub keep_punctuation: bool,
}

fn parse_preset(s: &str) -> Result<TaskPreset, String> {
    match s {
        "paraphrase" => Ok(TaskPreset::Paraphrase),
        "anlg" => Ok(TaskPreset::Anlg),
        _ => Err("expected `paraphrase` or `anlg`".into()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TrainLm(a) => train::run(a),
        Command::Paraphrase(a) => generate::run(generate::Task::Paraphrase, a),
        Command::Infill(a) => generate::run(generate::Task::Infill, a),
        Command::Eval(a) => eval::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.kind.code())
        }
    }
}
