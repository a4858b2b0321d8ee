//! `dmacos`: prepare corpora, pre-train, train, evaluate, and summarize
//! with the two-pass deliberation multi-task model.

mod cmds;
mod util;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dmacos", version, about = "Deliberation multi-task code summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training corpus: flatten ASTs, score name informativeness,
    /// mask names, build vocabularies, and split train/valid/test.
    Prep(PrepArgs),
    /// Pre-train the name-generation and informativeness tasks.
    Pretrain(TrainishArgs),
    /// Joint multi-task training with per-epoch validation selection.
    Train(TrainishArgs),
    /// Evaluate a checkpoint: BLEU4, ROUGE-L, METEOR-lite, and the
    /// masked-name robustness experiment.
    Eval(EvalArgs),
    /// Two-pass inference over one method.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct PrepArgs {
    /// Input JSONL: one method per line with either a neutral AST or
    /// pre-flattened body sequences.
    #[arg(long, conflicts_with = "gen_toy")]
    input: Option<PathBuf>,
    /// Generate a built-in demonstration corpus of this many methods
    /// instead of reading input.
    #[arg(long)]
    gen_toy: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// java, python, or toy; sets sequence windows and vocabulary caps.
    #[arg(long, default_value = "toy")]
    lang_profile: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Split percentages, e.g. 90,5,5.
    #[arg(long, default_value = "90,5,5")]
    split: String,
    /// Override the profile's body vocabulary cap.
    #[arg(long)]
    body_vocab: Option<usize>,
    /// Override the profile's summary vocabulary cap.
    #[arg(long)]
    summary_vocab: Option<usize>,
}

#[derive(Args)]
struct TrainishArgs {
    /// Prepared corpus directory (from `dmacos prep`).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Initialize parameters from a checkpoint (pre-train-then-fine-tune).
    #[arg(long)]
    init: Option<PathBuf>,
    /// full, no_mtl, no_two_pass, or no_mnip.
    #[arg(long)]
    ablation: Option<String>,
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    body_embed: Option<usize>,
    #[arg(long)]
    type_embed: Option<usize>,
    #[arg(long)]
    text_embed: Option<usize>,
    /// Global gradient-norm guard.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Stop once validation BLEU4 reaches this value.
    #[arg(long)]
    early_stop_bleu: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which split to evaluate: train, valid, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Also run the masked-name experiment and report both sets.
    #[arg(long)]
    masked: bool,
    /// Per-sample inference threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Neutral-AST JSON file describing one method.
    #[arg(long, conflicts_with = "source")]
    ast: Option<PathBuf>,
    /// Toy-language source text; omit all input flags to read source
    /// from stdin.
    #[arg(long)]
    source: Option<String>,
    /// Toy-language source file.
    #[arg(long, conflicts_with_all = ["ast", "source"])]
    source_file: Option<PathBuf>,
    /// Method name when the AST does not carry one.
    #[arg(long)]
    name: Option<String>,
    /// Optional directory for result.json and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prep(args) => cmds::prep(args),
        Command::Pretrain(args) => cmds::pretrain(args),
        Command::Train(args) => cmds::train(args),
        Command::Eval(args) => cmds::eval(args),
        Command::Summarize(args) => cmds::summarize(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
