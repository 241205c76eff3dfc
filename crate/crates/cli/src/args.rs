use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "selprompt", version, about = "Selective pre-translation prompting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelProvider {
    /// Local deterministic model that echoes the prompt's context block.
    Scripted,
    /// OpenAI-compatible chat completions endpoint.
    Openai,
    /// Together-hosted OpenAI-compatible endpoint.
    Together,
    Gemini,
    /// Recorded completions only (see --replay-dir).
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum TranslatorKind {
    /// Deterministic tagging translator; no network.
    #[default]
    Mock,
    /// JSON translation endpoint given by --translator-url.
    Http,
    /// Recorded translations only.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GapScopeArg {
    FewShot,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct TranslatorArgs {
    #[arg(long, value_enum, default_value_t = TranslatorKind::Mock)]
    pub translator: TranslatorKind,
    /// Endpoint for the http translator.
    #[arg(long)]
    pub translator_url: Option<String>,
    /// Cache namespace replayed by the replay translator.
    #[arg(long, default_value = "http")]
    pub translator_name: String,
    /// Persistent cache directory (defaults to $SELPROMPT_CACHE_DIR).
    #[arg(long, env = "SELPROMPT_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ResultsArgs {
    /// Result file or directory, `fixture` for every bundled table, or `fixture:NAME`. Repeatable.
    #[arg(long, required = true)]
    pub results: Vec<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub lang: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every selected configuration over a sampled dataset.
    Sweep(SweepArgs),
    /// Top configurations, improvements over baselines, component correlations.
    Analyze(AnalyzeArgs),
    /// Bin scores and mine association rules.
    Mine(MineArgs),
    /// Mean per-component performance gap.
    Gap(GapArgs),
    /// Recommended configuration for a task, language and model.
    Recommend(RecommendArgs),
    /// Compile one prompt.
    GenPrompt(GenPromptArgs),
    /// Translation quality per language and its correlation with similarity.
    MtQuality(MtQualityArgs),
    /// Convert a public dataset export into the unified line-delimited format.
    Convert(ConvertArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub lang: String,
    /// Model name sent to the provider (and recorded in results).
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum)]
    pub provider: ModelProvider,
    /// Dataset in the unified line-delimited format.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated configuration codes, or `all`.
    #[arg(long = "config", default_value = "all")]
    pub configs: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    #[arg(long, default_value_t = 250)]
    pub max_instances: usize,
    #[arg(long, default_value_t = 16_000)]
    pub max_context: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Completion store directory; required for --provider replay.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 0)]
    pub min_interval_ms: u64,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 512)]
    pub max_output: u32,
    /// Stop after this many new records.
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
    #[command(flatten)]
    pub translation: TranslatorArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub results: ResultsArgs,
    /// Run directories whose per-instance records feed the correlation matrix.
    #[arg(long = "run")]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub results: ResultsArgs,
    /// `appendixB` (support > 0.05, confidence > 0.75) or `table4` (support > 0.15, confidence > 0.8).
    #[arg(long, default_value = "appendixB")]
    pub profile: String,
    /// Also print the recommendation rows derived from the mined rules.
    #[arg(long)]
    pub derive: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub results: ResultsArgs,
    #[arg(long, value_enum, default_value_t = GapScopeArg::FewShot)]
    pub scope: GapScopeArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub lang: String,
    #[arg(long)]
    pub model: String,
    /// Resource class for a language missing from the registry.
    #[arg(long)]
    pub class: Option<String>,
    /// Rule table file whose rows override the bundled ones.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GenPromptArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub config: String,
    #[arg(long)]
    pub lang: String,
    /// JSON object with the item's task fields.
    #[arg(long)]
    pub input: PathBuf,
    /// Demonstrations in the unified line-delimited format.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub translation: TranslatorArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MtQualityArgs {
    /// Line-delimited {hypothesis, reference, language} records.
    #[arg(long)]
    pub pairs: PathBuf,
    /// `language,similarity` lines.
    #[arg(long)]
    pub similarity: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// squad, wikiann, conll, xnli-tsv, xnli-jsonl or xlsum.
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub lang: String,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    /// Demonstration pool (unified format) for few-shot prompts.
    #[arg(long)]
    pub demos: Vec<PathBuf>,
    /// Task of the demonstration pool files.
    #[arg(long)]
    pub demos_task: Option<String>,
    #[command(flatten)]
    pub translation: TranslatorArgs,
}
