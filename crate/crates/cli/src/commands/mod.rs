mod annotate;
mod data;
mod model;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use dosewatch_core::normalize::{NormalizeConfig, Normalizer};
use dosewatch_core::{SlangLexicon, SymptomVocabulary};
use serde::Serialize;

use crate::args::{Cli, Command, LexiconArgs, NormalizeArgs};
use crate::config::FileConfig;
use crate::usage;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => data::ingest(a, &file),
        Command::Preprocess(a) => data::preprocess(a, &file),
        Command::Split(a) => data::split(a, &file),
        Command::Train(a) => model::train(a, &file),
        Command::Predict(a) => model::predict(a),
        Command::Evaluate(a) => model::evaluate(a),
        Command::Report(a) => model::report(a),
        Command::Kappa(a) => annotate::kappa(a, &file),
        Command::AnnotateRound(a) => annotate::annotate_round(a, &file),
        Command::Serve(a) => annotate::serve(a, &file),
    }
}

/// Lexicon and vocabulary with the paths they came from (`None` for the
/// bundled seeds).
pub struct Resources {
    pub lexicon: SlangLexicon,
    pub vocab: SymptomVocabulary,
    pub lexicon_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
}

impl Resources {
    pub fn load(args: &LexiconArgs, file: &FileConfig) -> anyhow::Result<Self> {
        let lexicon_path = args.lexicon.clone().or_else(|| file.lexicon.clone());
        let vocab_path = args.vocab.clone().or_else(|| file.vocab.clone());
        let lexicon = match &lexicon_path {
            Some(p) => SlangLexicon::compile(p)?,
            None => SlangLexicon::seed(),
        };
        let vocab = match &vocab_path {
            Some(p) => SymptomVocabulary::load(p)?,
            None => SymptomVocabulary::seed(),
        };
        Ok(Resources {
            lexicon,
            vocab,
            lexicon_path,
            vocab_path,
        })
    }

    /// Hashes custom lexicon/vocabulary files into the manifest.
    pub fn record(&self, manifest: &mut crate::manifest::RunManifest) -> anyhow::Result<()> {
        for p in self.lexicon_path.iter().chain(&self.vocab_path) {
            manifest.input(p)?;
        }
        Ok(())
    }

    pub fn describe(&self) -> serde_json::Value {
        let name = |p: &Option<PathBuf>| p.as_ref().map_or("seed".to_string(), |p| p.display().to_string());
        serde_json::json!({
            "lexicon": name(&self.lexicon_path),
            "lexicon_version": self.lexicon.version(),
            "vocab": name(&self.vocab_path),
        })
    }
}

pub fn normalize_config(args: &NormalizeArgs, file: &FileConfig) -> NormalizeConfig {
    let d = NormalizeConfig::default();
    NormalizeConfig {
        strip_mentions: if args.keep_mentions {
            false
        } else {
            file.normalize.strip_mentions.unwrap_or(d.strip_mentions)
        },
        stemmer: args.stemmer.map(Into::into).or(file.normalize.stemmer).unwrap_or(d.stemmer),
        stopword_list: args
            .stopwords
            .clone()
            .or_else(|| file.normalize.stopwords.clone())
            .unwrap_or(d.stopword_list),
    }
}

pub fn normalizer(config: NormalizeConfig, res: &Resources) -> anyhow::Result<Normalizer> {
    Normalizer::new(config, res.lexicon.clone(), &res.vocab).map_err(|e| usage(e.to_string()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Pretty JSON with a trailing newline; stable for identical values.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_to_string(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// `dir/name.ext` -> `dir/name.ext<suffix>`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
