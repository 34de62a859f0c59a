use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vocab_mixin::augment::{Preset, Ranking};

#[derive(Debug, Parser)]
#[command(
    name = "vocab-mixin",
    version,
    about = "Vocabulary augmentation and transliteration mix-ins for multilingual encoders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a wordpiece vocabulary on a corpus.
    TrainVocab(TrainVocabArgs),
    /// Select UNK-rescuing pieces from a candidate vocabulary into a plan.
    Augment(AugmentArgs),
    /// Rewrite a corpus with a transliteration table.
    Translit(TranslitArgs),
    /// UNK token percentage and fertility of a vocabulary on a corpus.
    Coverage(CoverageArgs),
    /// Masked-language-model (continued) pretraining.
    Pretrain(PretrainArgs),
    /// Train and evaluate a part-of-speech probe.
    Probe(ProbeArgs),
    /// Run BASE / LAPT / augmentation configurations over several seeds.
    Compare(CompareArgs),
    /// Render grouped tables, scatter data or arrow-format deltas.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Table2,
    Fig1,
    Table4,
}

/// Flags every subcommand accepts.
#[derive(Debug, Args)]
pub struct Common {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (only `compare` runs in parallel).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON object of defaults, keyed by flag name; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainVocabArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Target vocabulary size.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub min_frequency: Option<u64>,
    /// Keep this fraction of sentences before training.
    #[arg(long)]
    pub downsample: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Base vocabulary.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Target-language corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Pre-trained candidate vocabulary; trained from the corpus if absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Transliterate the corpus first.
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub candidate_size: Option<usize>,
    #[arg(long)]
    pub min_frequency: Option<u64>,
    #[arg(long, value_parser = parse_ranking)]
    pub ranking: Option<Ranking>,
    #[arg(long)]
    pub downsample: Option<f64>,
    /// Also write the augmented vocabulary here.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TranslitArgs {
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Report the change relative to this vocabulary instead.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Language tag recorded in the report.
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long)]
    pub downsample: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Vocabulary the model is (or will be) bound to.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Validation corpus for best-epoch selection.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Grow the model by this plan before training.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Learning-rate multiplier for new rows (defaults to the plan's).
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// sgd or adaptive
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub downsample: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary the checkpoint is bound to.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Training annotations (ten-column format).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// XPOS or UPOS
    #[arg(long)]
    pub column: Option<String>,
    /// Transliterate token forms first.
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Keep the encoder fixed.
    #[arg(long)]
    pub frozen: bool,
    /// first_piece or mean_pieces
    #[arg(long)]
    pub pooling: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Use the bundled synthetic unseen-script language.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Base model, bound to the base vocabulary plus reserved pieces.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub candidate_size: Option<usize>,
    /// Number of seeds derived from --seed.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub tagger_epochs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: Option<ReportKind>,
    /// Record file (JSON).
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: vocab_mixin::Error| e.to_string())
}

fn parse_ranking(s: &str) -> Result<Ranking, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}
