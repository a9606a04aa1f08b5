use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dosewatch_core::annotate::MergeMode;
use dosewatch_core::classifiers::Algorithm;
use dosewatch_core::normalize::StemmerKind;
use dosewatch_core::pipeline::Task;

#[derive(Debug, Parser)]
#[command(name = "dosewatch", version, about = "Drug-use and overdose-symptom detection in social-media posts")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load raw JSONL archives, drop duplicates and irrelevant posts.
    Ingest(IngestArgs),
    /// Clean, tokenize and stem posts; scan slang and symptom phrases.
    Preprocess(PreprocessArgs),
    /// Seeded stratified train/test split of a labeled corpus.
    Split(SplitArgs),
    /// Fit a drug or symptom model.
    Train(TrainArgs),
    /// Label unseen posts with a trained model.
    Predict(PredictArgs),
    /// Score a model on a labeled test set.
    Evaluate(EvaluateArgs),
    /// Fleiss' kappa across independent annotation files.
    Kappa(KappaArgs),
    /// Run one LLM-suggest / human-review round on the annotation queue.
    AnnotateRound(AnnotateRoundArgs),
    /// Serve the annotation queue over HTTP.
    Serve(ServeArgs),
    /// Combine evaluation reports into one results table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Drug,
    Symptoms,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Drug => Task::Drug,
            TaskArg::Symptoms => Task::Symptoms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Lr,
    Nb,
    Knn,
    Dt,
    Rf,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Algorithm {
        match a {
            AlgoArg::Lr => Algorithm::LogisticRegression,
            AlgoArg::Nb => Algorithm::NaiveBayes,
            AlgoArg::Knn => Algorithm::Knn,
            AlgoArg::Dt => Algorithm::DecisionTree,
            AlgoArg::Rf => Algorithm::RandomForest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StemmerArg {
    Porter,
    None,
}

impl From<StemmerArg> for StemmerKind {
    fn from(s: StemmerArg) -> StemmerKind {
        match s {
            StemmerArg::Porter => StemmerKind::PorterLike,
            StemmerArg::None => StemmerKind::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeArg {
    Adjudication,
    Majority,
}

impl From<MergeArg> for MergeMode {
    fn from(m: MergeArg) -> MergeMode {
        match m {
            MergeArg::Adjudication => MergeMode::Adjudication,
            MergeArg::Majority => MergeMode::Majority,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    /// Offline stand-in that labels from lexicon and symptom matches.
    Mock,
    /// JSON completion endpoint: POST {model, prompt, max_tokens}, reply {text}.
    Http,
}

/// Slang lexicon and symptom vocabulary; the bundled seeds by default.
#[derive(Debug, Clone, Args)]
pub struct LexiconArgs {
    /// Slang lexicon TSV (phrase, class, note).
    #[arg(long, value_name = "TSV")]
    pub lexicon: Option<PathBuf>,
    /// Symptom vocabulary TSV (label, aliases...).
    #[arg(long, value_name = "TSV")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NormalizeArgs {
    #[arg(long, value_enum)]
    pub stemmer: Option<StemmerArg>,
    /// Keep @user and u/user mentions.
    #[arg(long)]
    pub keep_mentions: bool,
    #[arg(long, value_name = "NAME")]
    pub stopwords: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw JSONL archive; repeat for several.
    #[arg(long = "input", required = true, value_name = "JSONL")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub output: PathBuf,
    /// Inputs carry drug/symptom labels.
    #[arg(long)]
    pub labeled: bool,
    /// Skip the slang/symptom relevance filter.
    #[arg(long)]
    pub keep_irrelevant: bool,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_name = "JSONL")]
    pub input: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub output: PathBuf,
    #[command(flatten)]
    pub norm: NormalizeArgs,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_name = "JSONL")]
    pub input: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub train: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub test: PathBuf,
    /// Train fraction, strictly between 0 and 1.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain random split instead of stratifying by drug class.
    #[arg(long)]
    pub no_stratify: bool,
    /// Downsample every drug class to the smallest one first.
    #[arg(long)]
    pub balance: bool,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Naive Bayes additive smoothing.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// kNN neighbours.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    /// Features tried per tree split: all, sqrt or a count.
    #[arg(long, value_name = "all|sqrt|N")]
    pub split_features: Option<String>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Grow forest trees on the full training set.
    #[arg(long)]
    pub no_bootstrap: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long, value_name = "JSONL")]
    pub train: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Symptom probability cut-off.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Drop tokens seen in fewer training documents.
    #[arg(long)]
    pub min_df: Option<usize>,
    /// Keep only the most frequent tokens.
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub norm: NormalizeArgs,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub input: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Expected task; checked against the model.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub test: PathBuf,
    /// JSON report path; defaults to `<model>.eval.json`.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Model column label; defaults to the algorithm's short name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// One labeled JSONL file per annotator, covering the same post ids.
    #[arg(long, num_args = 2.., required = true, value_name = "JSONL")]
    pub annotations: Vec<PathBuf>,
    /// JSON report path; defaults to `<first annotation file>.kappa.json`.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct AnnotateRoundArgs {
    /// Queue directory (event log and snapshot).
    #[arg(long, value_name = "DIR")]
    pub queue: PathBuf,
    /// Posts to add to this round.
    #[arg(long, value_name = "JSONL")]
    pub posts: PathBuf,
    /// Round number, starting at 1.
    #[arg(long)]
    pub round: u32,
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderArg,
    /// Prepared human decisions: JSONL of {post_id, annotator, drug, symptoms, flags}.
    #[arg(long, value_name = "JSONL")]
    pub decisions: Option<PathBuf>,
    /// Accept usable suggestions under this annotator id.
    #[arg(long, value_name = "ID")]
    pub accept_as: Option<String>,
    /// Decisions needed per post.
    #[arg(long)]
    pub required: Option<usize>,
    #[arg(long, value_enum)]
    pub merge: Option<MergeArg>,
    /// Write all gold records so far to this JSONL file.
    #[arg(long, value_name = "JSONL")]
    pub gold: Option<PathBuf>,
    /// Completion URL for the http provider.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long = "llm-model")]
    pub llm_model: Option<String>,
    /// Built-in template id or template file path.
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Name of the environment variable holding the API credential.
    #[arg(long, value_name = "VAR")]
    pub credential_env: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Queue directory (event log and snapshot).
    #[arg(long, value_name = "DIR")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Built review UI to serve at `/`.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origin; repeat for several.
    #[arg(long = "cors-origin", value_name = "ORIGIN")]
    pub cors_origins: Vec<String>,
    #[arg(long)]
    pub required: Option<usize>,
    #[arg(long, value_enum)]
    pub merge: Option<MergeArg>,
    #[command(flatten)]
    pub lex: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Reports written by `evaluate`.
    #[arg(long, num_args = 1.., required = true, value_name = "JSON")]
    pub evals: Vec<PathBuf>,
    /// Combined JSON report.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Also write the text table here.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}
