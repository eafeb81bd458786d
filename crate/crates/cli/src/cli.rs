use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vf", version, about = "Annotate patient symptom reports and train a multi-label classifier")]
pub struct Cli {
    /// TOML file supplying flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus JSON-lines file and a taxonomy CSV into a store directory.
    Ingest(IngestArgs),
    /// Build the positional index of a store.
    Index(IndexArgs),
    /// Word embeddings and concept synonym maps.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Apply a term table to every verbatim in a store.
    Annotate(AnnotateArgs),
    /// Curator validation samples and reports.
    #[command(subcommand)]
    Validate(ValidateCommand),
    /// Filter, split and hold out annotated datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a classifier bundle.
    Train(TrainArgs),
    /// Score bundles or stored predictions against labeled rows.
    Evaluate(EvaluateArgs),
    /// Score one text with a trained bundle.
    Classify(ClassifyArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Generate a synthetic corpus with known labels from a term table.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DictCommand {
    /// Train skip-gram embeddings on corpus text.
    TrainW2v(TrainW2vArgs),
    /// Nearest terms by cosine similarity.
    Similar(SimilarArgs),
    /// Expand a concept id, or list the concepts containing a term.
    Synonyms(SynonymsArgs),
}

#[derive(Debug, Args)]
pub struct TrainW2vArgs {
    /// Corpus JSON lines, or plain text with one sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimilarArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub term: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SynonymsArgs {
    /// Tab-separated synonym map; the bundled sample map when omitted.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long, required_unless_present = "term")]
    pub cui: Option<String>,
    #[arg(long, conflicts_with = "cui")]
    pub term: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ValidateCommand {
    /// Draw a validation sample for one symptom.
    Sample(SampleArgs),
    /// Per-symptom precision, recall and F1 from curator verdicts.
    Report(ReportArgs),
    /// Verbatims gained and lost per symptom between two annotations.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Annotated dataset to sample from.
    #[arg(long)]
    pub annotated: PathBuf,
    #[arg(long)]
    pub symptom: String,
    #[arg(long, default_value_t = 0.01)]
    pub fraction: f64,
    /// Symptom whose matches supply near-miss negatives.
    #[arg(long)]
    pub negatives_from: String,
    #[arg(long, default_value_t = vf_core::annotate::DEFAULT_NEGATIVE_RATIO)]
    pub negative_ratio: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Where to write the sample; the store's samples directory by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub symptom: String,
    /// Judgment log; the store's log by default.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Report over judged items only instead of requiring every verdict.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Drop rare label combinations, excluded ids and unknown-only rows.
    Filter(FilterArgs),
    /// Train, validation and test split with a manifest.
    Split(SplitArgs),
    /// Hold out curated rows for testing; the rest train a baseline.
    Heldout(HeldoutArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_freq: usize,
    /// Datasets whose verbatim ids are removed first.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    #[arg(long)]
    pub keep_unknown: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub test_validation_ratio: f64,
    /// Keep each participant's rows on one side (needs --store).
    #[arg(long)]
    pub grouped: bool,
    /// Store used to attach text and, with --grouped, participants.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeldoutArgs {
    #[arg(long)]
    pub curated: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = vf_core::dataset::DEFAULT_HELDOUT_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = vf_core::dataset::DEFAULT_HELDOUT_TARGET)]
    pub target: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Taxonomy CSV naming the label categories; the bundled one by default.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = vf_core::vectorize::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = vf_core::vectorize::DEFAULT_MAX_FEATURES)]
    pub max_features: usize,
    /// Taxonomy CSV defining the label registry; the bundled one by default.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Store to take text from when rows carry none.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Write per-epoch history as JSON lines.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
    Kv,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Bundles to compare, one report column each.
    #[arg(long, required_unless_present = "predictions")]
    pub bundle: Vec<PathBuf>,
    #[arg(long, requires = "bundle")]
    pub test: Option<PathBuf>,
    /// Stored predictions to score instead of running a bundle.
    #[arg(long, conflicts_with_all = ["bundle", "test"])]
    pub predictions: Option<PathBuf>,
    /// Keep only test rows whose participant has no training row.
    #[arg(long, requires = "train")]
    pub unseen_participants: bool,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Store for text and participant links.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Taxonomy CSV for --predictions; the bundled one by default.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    /// Also write each report as JSON to this directory.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long)]
    pub store: PathBuf,
    /// Term table to annotate with; the store's copy by default.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Taxonomy CSV; the bundled one by default.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Term table used as templates; the bundled tuned table by default.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Synonym map for perturbations; the bundled sample map by default.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub participants: Option<usize>,
    /// Rows set aside as curator-labeled.
    #[arg(long, default_value_t = 745)]
    pub curated: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}
