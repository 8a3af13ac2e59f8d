use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

/// Build music-understanding benchmarks, preprocess audio, train the toy
/// model and score predictions.
#[derive(Debug, Parser)]
#[command(name = "omkit", version, arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Knobs shared by every subcommand. A `--config` file overrides them.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file whose fields override the matching flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Music-token mean-pooling factor (1, 2, 4, ..., 128).
    #[arg(long, global = true)]
    pub pool_factor: Option<usize>,
    #[arg(long, global = true)]
    pub lora_r: Option<usize>,
    #[arg(long, global = true)]
    pub lora_alpha: Option<f64>,
    /// Training stage: stage1, stage2, lyrics or tools.
    #[arg(long, global = true)]
    pub stage: Option<String>,
    /// Annotation endpoint for the remote annotator.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Worker threads for per-record work (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Where to write the run manifest when the command has no `--out`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an instruction dataset from clip metadata, or a tool-use dataset.
    BuildBench(BuildBenchArgs),
    /// Turn a WAV file into a log-mel spectrogram and, optionally, pooled tokens.
    Preprocess(PreprocessArgs),
    /// Pretrain the toy base, then run the training stages on a toy set.
    TrainToy(TrainToyArgs),
    /// Score free-text predictions with BLEU, ROUGE and METEOR-lite.
    EvalText(PairArgs),
    /// Score multiple-choice answers.
    EvalMcq(EvalMcqArgs),
    /// Score tool-call predictions against gold answers.
    EvalTools(PairArgs),
    /// Run one analysis tool on a clip and print its rendered output.
    RunTool(RunToolArgs),
    /// Combine report files into one table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnnotatorKind {
    Mock,
    Remote,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["metadata", "tool_use"])))]
pub struct BuildBenchArgs {
    /// JSONL of clip metadata rows.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Generate this many tool-use records instead.
    #[arg(long)]
    pub tool_use: Option<usize>,
    #[arg(long, default_value = "captioning")]
    pub task: String,
    /// Prompt template file; defaults to the shipped template for the task.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, default_value = "omkit")]
    pub dataset: String,
    #[arg(long, value_enum, default_value_t = AnnotatorKind::Mock)]
    pub annotator: AnnotatorKind,
    /// Output JSONL; the train side when `--test-out` is given.
    #[arg(long)]
    pub out: PathBuf,
    /// Also split and write the test side here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// File with one pinned test id per line (switches to pinned top-up).
    #[arg(long, requires = "test_size")]
    pub pinned: Option<PathBuf>,
    /// Target number of distinct test ids for pinned top-up.
    #[arg(long, requires = "pinned")]
    pub test_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub audio: PathBuf,
    /// Binary log-mel output.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file for the pooled patch tokens.
    #[arg(long)]
    pub tokens_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Checkpoint path; the manifest goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL training log of {step, lr, loss}.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub examples: usize,
    #[arg(long, default_value_t = 40)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 250)]
    pub stage1_epochs: usize,
    /// Epochs for the adapter stage, when one is requested.
    #[arg(long, default_value_t = 10)]
    pub adapter_epochs: usize,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// JSONL of {id, prediction}.
    #[arg(long)]
    pub pred: PathBuf,
    /// JSONL of {id, reference} or benchmark records.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalMcqArgs {
    /// JSONL of {question, options, gold, model_answer}.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunToolArgs {
    #[arg(long)]
    pub tool: String,
    #[arg(long)]
    pub audio: PathBuf,
    /// Comma-separated numeric arguments, e.g. `10,15`.
    #[arg(long, default_value = "")]
    pub args: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files written by the eval commands or train-toy.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
