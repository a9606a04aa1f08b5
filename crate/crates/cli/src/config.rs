//! Optional TOML config. Every key mirrors a flag; flags win.

use std::path::{Path, PathBuf};

use dosewatch_core::annotate::{AnnotatorConfig, MergeMode};
use dosewatch_core::normalize::StemmerKind;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub lexicon: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub normalize: NormalizeSection,
    pub tfidf: TfidfSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub queue: QueueSection,
    pub annotator: Option<AnnotatorConfig>,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeSection {
    pub stemmer: Option<StemmerKind>,
    pub strip_mentions: Option<bool>,
    pub stopwords: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfSection {
    pub min_df: Option<usize>,
    pub max_vocab: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub fraction: Option<f64>,
    pub stratify: Option<bool>,
    pub balance: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub learning_rate: Option<f64>,
    pub max_iters: Option<usize>,
    pub l2: Option<f64>,
    pub tol: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub split_features: Option<String>,
    pub n_trees: Option<usize>,
    pub bootstrap: Option<bool>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueSection {
    pub required_decisions: Option<usize>,
    pub merge: Option<MergeMode>,
    pub adjudicator: Option<String>,
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub store: Option<PathBuf>,
    pub bind: Option<std::net::IpAddr>,
    pub port: Option<u16>,
    pub static_dir: Option<PathBuf>,
    pub cors_origins: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_section() {
        let cfg: FileConfig = toml::from_str(
            r#"
seed = 7
lexicon = "lex.tsv"

[normalize]
stemmer = "none"
strip_mentions = false

[tfidf]
min_df = 1

[split]
fraction = 0.75

[model]
learning_rate = 2.0
n_trees = 10
split_features = "sqrt"

[queue]
required_decisions = 3
merge = "majority"

[annotator]
endpoint = "http://localhost:9000/v1"
credential_env = "MY_KEY"

[serve]
port = 9090
cors_origins = ["http://localhost:5173"]
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.normalize.stemmer, Some(StemmerKind::None));
        assert_eq!(cfg.model.learning_rate, Some(2.0));
        assert_eq!(cfg.queue.merge, Some(MergeMode::Majority));
        let ann = cfg.annotator.unwrap();
        assert_eq!(ann.credential_env, "MY_KEY");
        assert_eq!(ann.model, AnnotatorConfig::default().model);
        assert_eq!(cfg.serve.port, Some(9090));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[model]\nlearning_rat = 1.0\n").is_err());
        assert!(toml::from_str::<FileConfig>("sede = 1\n").is_err());
    }
}
