//! Post collections: domain types, JSONL ingestion and the corpus-level
//! transformations (dedup, relevance filter, balancing, splitting).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::normalize::{clean_text, PhraseMatcher, SlangLexicon};

/// Upper bound on post length, in characters.
pub const MAX_POST_CHARS: usize = 40_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("class {0} has no members; cannot downsample")]
    EmptyClass(DrugClass),
    #[error("corpus is empty")]
    Empty,
    #[error("invalid split fraction {0}; must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid labeled post {id:?}: {message}")]
    InvalidLabel { id: String, message: String },
}

/// The eight substances a post can be attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrugClass {
    Alcohol,
    Cocaine,
    Ecstasy,
    Fentanyl,
    Heroin,
    Ketamine,
    #[serde(rename = "LSD")]
    Lsd,
    Methamphetamine,
}

impl DrugClass {
    pub const ALL: [DrugClass; 8] = [
        DrugClass::Alcohol,
        DrugClass::Cocaine,
        DrugClass::Ecstasy,
        DrugClass::Fentanyl,
        DrugClass::Heroin,
        DrugClass::Ketamine,
        DrugClass::Lsd,
        DrugClass::Methamphetamine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DrugClass::Alcohol => "Alcohol",
            DrugClass::Cocaine => "Cocaine",
            DrugClass::Ecstasy => "Ecstasy",
            DrugClass::Fentanyl => "Fentanyl",
            DrugClass::Heroin => "Heroin",
            DrugClass::Ketamine => "Ketamine",
            DrugClass::Lsd => "LSD",
            DrugClass::Methamphetamine => "Methamphetamine",
        }
    }

    /// Position in [`DrugClass::ALL`]; used for every tie-break.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<DrugClass> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for DrugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown drug class {0:?}")]
pub struct UnknownDrugClass(pub String);

impl FromStr for DrugClass {
    type Err = UnknownDrugClass;

    /// Accepts the canonical names case-insensitively plus the clinical
    /// aliases `MDMA` and `lysergic acid diethylamide`. Street names are
    /// resolved by [`SlangLexicon`], not here.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase();
        let class = match key.as_str() {
            "alcohol" => DrugClass::Alcohol,
            "cocaine" => DrugClass::Cocaine,
            "ecstasy" | "mdma" => DrugClass::Ecstasy,
            "fentanyl" => DrugClass::Fentanyl,
            "heroin" => DrugClass::Heroin,
            "ketamine" => DrugClass::Ketamine,
            "lsd" | "lysergic acid diethylamide" => DrugClass::Lsd,
            "methamphetamine" => DrugClass::Methamphetamine,
            _ => return Err(UnknownDrugClass(s.to_string())),
        };
        Ok(class)
    }
}

/// Annotation flags from the labeling guidelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    PolydrugUncertainty,
    WithdrawalSuspected,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::PolydrugUncertainty => "polydrug_uncertainty",
            Flag::WithdrawalSuspected => "withdrawal_suspected",
        }
    }
}

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace([' ', '-'], "_").as_str() {
            "polydrug_uncertainty" => Ok(Flag::PolydrugUncertainty),
            "withdrawal_suspected" => Ok(Flag::WithdrawalSuspected),
            _ => Err(format!("unknown flag {s:?}")),
        }
    }
}

/// Symptom indices into a [`SymptomVocabulary`].
pub type SymptomSet = BTreeSet<usize>;

/// A raw post as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub source: String,
    pub created_at: Option<String>,
}

impl Post {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Post {
            id: id.into(),
            text: text.into(),
            source: String::new(),
            created_at: None,
        }
    }
}

impl AsRef<Post> for Post {
    fn as_ref(&self) -> &Post {
        self
    }
}

/// A post with its gold drug class, symptom set and annotation flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPost {
    pub post: Post,
    pub drug: DrugClass,
    pub symptoms: SymptomSet,
    pub flags: BTreeSet<Flag>,
}

impl AsRef<Post> for LabeledPost {
    fn as_ref(&self) -> &Post {
        &self.post
    }
}

impl LabeledPost {
    /// Checks the label invariants against `vocab`.
    pub fn validate(&self, vocab: &SymptomVocabulary) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::InvalidLabel {
            id: self.post.id.clone(),
            message,
        };
        if self.post.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.post.text.trim().is_empty() {
            return Err(invalid("empty text".into()));
        }
        if self.symptoms.is_empty() && self.flags.is_empty() {
            return Err(invalid("symptom set is empty and no flag explains it".into()));
        }
        if let Some(bad) = self.symptoms.iter().find(|&&i| i >= vocab.len()) {
            return Err(invalid(format!("symptom index {bad} outside vocabulary")));
        }
        Ok(())
    }
}

/// Ordered, lower-cased symptom labels with the surface phrases that
/// signal each one in text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomVocabulary {
    labels: Vec<String>,
    /// Surface phrase to label index. Each label is also its own phrase.
    phrases: Vec<(String, usize)>,
}

const SEED_SYMPTOMS: &[(&str, &[&str])] = &[
    ("dizziness", &["dizzy", "lightheaded", "light headed"]),
    ("fainting", &["fainted", "faint", "passed out", "pass out"]),
    ("blurred vision", &["blurry", "vision went blurry", "blurry vision"]),
    ("headache", &["headaches", "migraine", "head was pounding"]),
    (
        "tachycardia",
        &["heart was racing", "heart racing", "heart was pounding", "heart pounding", "racing heart"],
    ),
    (
        "shortness of breath",
        &["couldnt breathe", "cant breathe", "short of breath", "struggling to breathe"],
    ),
    ("tremors", &["tremor", "shaking", "shakes", "trembling", "shaky"]),
    ("hyperthermia", &["overheating", "overheated", "really hot", "burning up"]),
    ("sweating", &["sweat", "sweaty", "sweats"]),
    (
        "respiratory depression",
        &["breathing slowed", "slow breathing", "stopped breathing", "shallow breathing"],
    ),
    ("drowsiness", &["drowsy", "tired", "sleepy", "nodding off", "eyes open"]),
    (
        "loss of consciousness",
        &["unconscious", "blacked out", "went black", "lost consciousness"],
    ),
    ("nausea", &["nauseous", "vomiting", "vomited", "threw up", "throwing up"]),
    ("coma", &["comatose", "out cold"]),
    ("dissociation", &["dissociated", "dissociating", "distant", "floating"]),
    ("confusion", &["confused", "disoriented", "what was real"]),
    (
        "hallucinations",
        &["hallucination", "hallucinating", "heard voices", "seeing things"],
    ),
    ("paranoia", &["paranoid", "panicked"]),
    ("agitation", &["agitated"]),
    ("restlessness", &["restless", "stop moving"]),
];

impl Default for SymptomVocabulary {
    fn default() -> Self {
        Self::seed()
    }
}

impl SymptomVocabulary {
    /// The twenty overdose symptoms of the reference label schema, with
    /// common narrative phrasings as aliases.
    pub fn seed() -> Self {
        let entries = SEED_SYMPTOMS
            .iter()
            .map(|(label, aliases)| (label.to_string(), aliases.iter().map(|a| a.to_string()).collect()));
        Self::from_entries(entries).expect("seed vocabulary is well-formed")
    }

    /// Builds a vocabulary from `(label, aliases)` pairs. Labels and
    /// aliases are passed through [`clean_text`]; a phrase may point at
    /// only one label.
    pub fn from_entries<I>(entries: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (String, Vec<String>)>,
    {
        let mut labels = Vec::new();
        let mut phrases: Vec<(String, usize)> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (label, aliases) in entries {
            let label = clean_text(&label);
            if label.is_empty() {
                return Err("empty symptom label".into());
            }
            if labels.contains(&label) {
                return Err(format!("duplicate symptom label {label:?}"));
            }
            let index = labels.len();
            labels.push(label.clone());
            for phrase in std::iter::once(label).chain(aliases.iter().map(|a| clean_text(a))) {
                if phrase.is_empty() {
                    continue;
                }
                match seen.get(&phrase) {
                    Some(&other) if other != index => {
                        return Err(format!("phrase {phrase:?} assigned to two labels"));
                    }
                    Some(_) => {}
                    None => {
                        seen.insert(phrase.clone(), index);
                        phrases.push((phrase, index));
                    }
                }
            }
        }
        Ok(SymptomVocabulary { labels, phrases })
    }

    /// Reads `label<TAB>alias, alias, ...` rows; `#` starts a comment line.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let label = cols.next().unwrap_or_default().to_string();
            let aliases = cols
                .next()
                .map(|a| a.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            entries.push((label, aliases));
        }
        Self::from_entries(entries).map_err(|message| CorpusError::Line { line: 0, message })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Exact label lookup after cleaning.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let key = clean_text(label);
        self.labels.iter().position(|l| *l == key)
    }

    /// Label or alias lookup after cleaning.
    pub fn resolve(&self, phrase: &str) -> Option<usize> {
        let key = clean_text(phrase);
        self.phrases.iter().find(|(p, _)| *p == key).map(|(_, i)| *i)
    }

    pub fn phrases(&self) -> &[(String, usize)] {
        &self.phrases
    }

    pub fn matcher(&self) -> PhraseMatcher<usize> {
        PhraseMatcher::new(self.phrases.iter().cloned())
    }

    pub fn labels_of(&self, set: &SymptomSet) -> Vec<String> {
        set.iter().filter_map(|&i| self.label(i).map(str::to_string)).collect()
    }
}

/// Either flavour of a loaded corpus.
#[derive(Debug, Clone)]
pub enum Corpus {
    Unlabeled(Vec<Post>),
    Labeled(Vec<LabeledPost>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        match self {
            Corpus::Unlabeled(p) => p.len(),
            Corpus::Labeled(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_corpus(path: &Path, labeled: bool, vocab: &SymptomVocabulary) -> Result<Corpus, CorpusError> {
    if labeled {
        load_labeled(path, vocab).map(Corpus::Labeled)
    } else {
        load_posts(path).map(Corpus::Unlabeled)
    }
}

pub fn load_posts(path: &Path) -> Result<Vec<Post>, CorpusError> {
    read_records(path, |_, obj| parse_post(obj))
}

pub fn load_labeled(path: &Path, vocab: &SymptomVocabulary) -> Result<Vec<LabeledPost>, CorpusError> {
    read_records(path, |_, obj| parse_labeled(obj, vocab))
}

pub fn parse_post_line(line: &str) -> Result<Post, String> {
    let obj = parse_object(line)?;
    parse_post(&obj)
}

pub fn parse_labeled_line(line: &str, vocab: &SymptomVocabulary) -> Result<LabeledPost, String> {
    let obj = parse_object(line)?;
    parse_labeled(&obj, vocab)
}

fn read_records<T, F>(path: &Path, parse: F) -> Result<Vec<T>, CorpusError>
where
    T: AsRef<Post>,
    F: Fn(usize, &Map<String, Value>) -> Result<T, String>,
{
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = parse_object(&line).map_err(|message| CorpusError::Line { line: line_no, message })?;
        let record = parse(line_no, &obj).map_err(|message| CorpusError::Line { line: line_no, message })?;
        let id = &record.as_ref().id;
        if !ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: id.clone(),
            });
        }
        out.push(record);
    }
    log::info!("loaded {} records from {}", out.len(), path.display());
    Ok(out)
}

fn parse_object(line: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(obj)) => Ok(obj),
        Ok(_) => Err("expected a JSON object".into()),
        Err(e) => Err(format!("malformed JSON: {e}")),
    }
}

fn required_str<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a str, String> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(format!("missing field {field}")),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("field {field} must be a string")),
    }
}

fn string_list(obj: &Map<String, Value>, field: &str) -> Result<Vec<String>, String> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                _ => Err(format!("field {field} must contain strings")),
            })
            .collect(),
        Some(_) => Err(format!("field {field} must be an array")),
    }
}

fn parse_post(obj: &Map<String, Value>) -> Result<Post, String> {
    let id = required_str(obj, "id")?;
    let text = required_str(obj, "text")?;
    if id.is_empty() {
        return Err("field id is empty".into());
    }
    if text.trim().is_empty() {
        return Err("field text is empty".into());
    }
    if text.chars().count() > MAX_POST_CHARS {
        return Err(format!("field text exceeds {MAX_POST_CHARS} characters"));
    }
    let source = match obj.get("source") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("field source must be a string".into()),
    };
    let created_at = match obj.get("created_at") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("field created_at must be a string or null".into()),
    };
    Ok(Post {
        id: id.to_string(),
        text: text.to_string(),
        source,
        created_at,
    })
}

fn parse_labeled(obj: &Map<String, Value>, vocab: &SymptomVocabulary) -> Result<LabeledPost, String> {
    let post = parse_post(obj)?;
    let drug = required_str(obj, "drug")?;
    let drug = DrugClass::from_str(drug).map_err(|e| e.to_string())?;
    let mut symptoms = SymptomSet::new();
    for label in string_list(obj, "symptoms")? {
        let index = vocab
            .index_of(&label)
            .ok_or_else(|| format!("unknown symptom {label:?}"))?;
        symptoms.insert(index);
    }
    let flags = string_list(obj, "flags")?
        .iter()
        .map(|f| Flag::from_str(f))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let labeled = LabeledPost {
        post,
        drug,
        symptoms,
        flags,
    };
    labeled.validate(vocab).map_err(|e| match e {
        CorpusError::InvalidLabel { message, .. } => message,
        other => other.to_string(),
    })?;
    Ok(labeled)
}

/// Serializes a post to its JSONL object.
pub fn post_to_json(post: &Post) -> Value {
    serde_json::json!({
        "id": post.id,
        "text": post.text,
        "source": post.source,
        "created_at": post.created_at,
    })
}

pub fn labeled_to_json(item: &LabeledPost, vocab: &SymptomVocabulary) -> Value {
    let mut value = post_to_json(&item.post);
    let obj = value.as_object_mut().expect("object");
    obj.insert("drug".into(), Value::String(item.drug.name().into()));
    obj.insert(
        "symptoms".into(),
        Value::Array(vocab.labels_of(&item.symptoms).into_iter().map(Value::String).collect()),
    );
    obj.insert(
        "flags".into(),
        Value::Array(item.flags.iter().map(|f| Value::String(f.name().into())).collect()),
    );
    value
}

fn write_lines<I>(path: &Path, lines: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = Value>,
{
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for value in lines {
        serde_json::to_writer(&mut out, &value).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_posts(path: &Path, posts: &[Post]) -> Result<(), CorpusError> {
    write_lines(path, posts.iter().map(post_to_json))
}

pub fn write_labeled(path: &Path, items: &[LabeledPost], vocab: &SymptomVocabulary) -> Result<(), CorpusError> {
    write_lines(path, items.iter().map(|p| labeled_to_json(p, vocab)))
}

/// Lower-cased, whitespace-collapsed text used as the duplicate key.
pub fn dedup_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Drops posts whose [`dedup_key`] was already seen. First occurrence wins.
pub fn deduplicate<T: AsRef<Post>>(corpus: Vec<T>) -> Vec<T> {
    let mut seen = HashSet::new();
    corpus
        .into_iter()
        .filter(|item| seen.insert(dedup_key(&item.as_ref().text)))
        .collect()
}

/// Whether the cleaned text mentions a drug (name or slang) or a symptom phrase.
pub fn is_relevant(text: &str, lexicon: &SlangLexicon, symptoms: &PhraseMatcher<usize>) -> bool {
    let cleaned = clean_text(text);
    let tokens: Vec<&str> = cleaned.split(' ').filter(|t| !t.is_empty()).collect();
    lexicon.matcher().has_match(&tokens) || symptoms.has_match(&tokens)
}

pub fn filter_relevant<T: AsRef<Post>>(corpus: Vec<T>, lexicon: &SlangLexicon, vocab: &SymptomVocabulary) -> Vec<T> {
    let symptoms = vocab.matcher();
    corpus
        .into_iter()
        .filter(|item| is_relevant(&item.as_ref().text, lexicon, &symptoms))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceStrategy {
    DownsampleToMin,
    None,
}

/// Downsamples every class in `classes` to the smallest class count.
/// Posts of classes outside `classes` are dropped; retained posts keep
/// their corpus order.
pub fn balance(
    corpus: Vec<LabeledPost>,
    strategy: BalanceStrategy,
    classes: &[DrugClass],
    seed: u64,
) -> Result<Vec<LabeledPost>, CorpusError> {
    if strategy == BalanceStrategy::None {
        return Ok(corpus);
    }
    let mut members: Vec<(DrugClass, Vec<usize>)> = classes.iter().map(|&c| (c, Vec::new())).collect();
    for (i, item) in corpus.iter().enumerate() {
        if let Some((_, list)) = members.iter_mut().find(|(c, _)| *c == item.drug) {
            list.push(i);
        }
    }
    if let Some((class, _)) = members.iter().find(|(_, list)| list.is_empty()) {
        return Err(CorpusError::EmptyClass(*class));
    }
    let min = members.iter().map(|(_, list)| list.len()).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; corpus.len()];
    for (_, list) in members.iter_mut() {
        list.shuffle(&mut rng);
        for &i in list.iter().take(min) {
            keep[i] = true;
        }
    }
    Ok(corpus
        .into_iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then_some(item))
        .collect())
}

/// Present classes in enum order, each with its count.
pub fn class_counts(corpus: &[LabeledPost]) -> Vec<(DrugClass, usize)> {
    let mut counts = [0usize; 8];
    for item in corpus {
        counts[item.drug.index()] += 1;
    }
    DrugClass::ALL
        .iter()
        .zip(counts)
        .filter(|(_, n)| *n > 0)
        .map(|(c, n)| (*c, n))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by_drug: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 0,
            stratify_by_drug: true,
        }
    }
}

impl SplitConfig {
    /// `floor(train_fraction * n)`, nudged so that decimal fractions such
    /// as 0.29 do not lose a unit to binary rounding.
    pub fn train_size(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<LabeledPost>,
    pub test: Vec<LabeledPost>,
    /// Classes with fewer than two members, placed wholly in train.
    pub undersized_classes: Vec<DrugClass>,
}

/// Seeded train/test partition.
///
/// The train side always holds `floor(train_fraction * n)` posts unless
/// undersized classes alone exceed that. Stratified splits apportion the
/// train quota across classes by largest remainder (ties to enum order).
pub fn split(corpus: Vec<LabeledPost>, cfg: &SplitConfig) -> Result<Split, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(cfg.train_fraction));
    }
    let n = corpus.len();
    let target = cfg.train_size(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut in_train = vec![false; n];
    let mut undersized_classes = Vec::new();

    if cfg.stratify_by_drug {
        let mut groups: Vec<(DrugClass, Vec<usize>)> = Vec::new();
        for class in DrugClass::ALL {
            let members: Vec<usize> = (0..n).filter(|&i| corpus[i].drug == class).collect();
            if !members.is_empty() {
                groups.push((class, members));
            }
        }
        let mut quota_pool = target;
        for (class, members) in &groups {
            if members.len() < 2 {
                log::warn!("class {class} has {} member(s); placing it in train", members.len());
                undersized_classes.push(*class);
                for &i in members {
                    in_train[i] = true;
                }
                quota_pool = quota_pool.saturating_sub(members.len());
            }
        }
        let sized: Vec<&(DrugClass, Vec<usize>)> = groups.iter().filter(|(_, m)| m.len() >= 2).collect();
        let rest: usize = sized.iter().map(|(_, m)| m.len()).sum();
        if rest > 0 {
            let mut quotas: Vec<(usize, usize, usize)> = sized
                .iter()
                .enumerate()
                .map(|(g, (_, m))| {
                    let num = quota_pool * m.len();
                    (g, num / rest, num % rest)
                })
                .collect();
            let assigned: usize = quotas.iter().map(|q| q.1).sum();
            let mut leftover = quota_pool - assigned;
            let mut order: Vec<usize> = (0..quotas.len()).collect();
            order.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
            for g in order {
                if leftover == 0 {
                    break;
                }
                if quotas[g].2 > 0 {
                    quotas[g].1 += 1;
                    leftover -= 1;
                }
            }
            for (g, quota, _) in quotas {
                let mut members = sized[g].1.clone();
                members.shuffle(&mut rng);
                for &i in members.iter().take(quota) {
                    in_train[i] = true;
                }
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in order.iter().take(target) {
            in_train[i] = true;
        }
    }

    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (item, t) in corpus.into_iter().zip(in_train) {
        if t {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok(Split {
        train,
        test,
        undersized_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(id: &str, drug: DrugClass) -> LabeledPost {
        LabeledPost {
            post: Post::new(id, format!("text {id}")),
            drug,
            symptoms: [0].into_iter().collect(),
            flags: BTreeSet::new(),
        }
    }

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_three_posts_in_order() {
        let f = write_tmp(&[
            r#"{"id":"a","text":"one","source":"r/Drugs","created_at":null}"#,
            r#"{"id":"b","text":"two","source":"r/LSD","created_at":"2020-01-01T00:00:00Z"}"#,
            r#"{"id":"c","text":"three","source":"r/MDMA"}"#,
        ]);
        let posts = load_posts(f.path()).unwrap();
        let ids: Vec<_> = posts.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(posts[1].created_at.as_deref(), Some("2020-01-01T00:00:00Z"));
    }

    #[test]
    fn missing_text_names_line() {
        let f = write_tmp(&[
            r#"{"id":"a","text":"one","source":"s"}"#,
            r#"{"id":"b","source":"s"}"#,
        ]);
        let err = load_posts(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "line 2: missing field text");
    }

    #[test]
    fn duplicate_id_rejected() {
        let f = write_tmp(&[r#"{"id":"a","text":"one"}"#, r#"{"id":"a","text":"two"}"#]);
        assert!(matches!(load_posts(f.path()), Err(CorpusError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn malformed_line_and_long_text() {
        let f = write_tmp(&[r#"{"id":"a","text":"one"}"#, "{not json"]);
        assert!(load_posts(f.path()).unwrap_err().to_string().starts_with("line 2: malformed JSON"));
        let long = format!(r#"{{"id":"a","text":"{}"}}"#, "x".repeat(MAX_POST_CHARS + 1));
        let f = write_tmp(&[&long]);
        assert!(load_posts(f.path()).is_err());
    }

    #[test]
    fn labeled_round_trip_through_jsonl() {
        let vocab = SymptomVocabulary::seed();
        let f = write_tmp(&[
            r#"{"id":"a","text":"smack","source":"r/Opiates","created_at":null,"drug":"Heroin","symptoms":["nausea","coma"],"flags":["polydrug_uncertainty"]}"#,
            r#"{"id":"b","text":"molly","drug":"MDMA","symptoms":["sweating"]}"#,
        ]);
        let items = load_labeled(f.path(), &vocab).unwrap();
        assert_eq!(items[0].drug, DrugClass::Heroin);
        assert_eq!(items[1].drug, DrugClass::Ecstasy);
        assert!(items[0].flags.contains(&Flag::PolydrugUncertainty));
        let out = tempfile::NamedTempFile::new().unwrap();
        write_labeled(out.path(), &items, &vocab).unwrap();
        assert_eq!(load_labeled(out.path(), &vocab).unwrap(), items);
    }

    #[test]
    fn labeled_rejects_unknown_drug_and_unflagged_empty_symptoms() {
        let vocab = SymptomVocabulary::seed();
        let f = write_tmp(&[r#"{"id":"a","text":"t","drug":"Vodka","symptoms":["nausea"]}"#]);
        assert!(load_labeled(f.path(), &vocab).is_err());
        let f = write_tmp(&[r#"{"id":"a","text":"t","drug":"Heroin","symptoms":[]}"#]);
        assert!(load_labeled(f.path(), &vocab).is_err());
        let f = write_tmp(&[r#"{"id":"a","text":"t","drug":"Heroin","symptoms":[],"flags":["withdrawal_suspected"]}"#]);
        assert!(load_labeled(f.path(), &vocab).is_ok());
    }

    #[test]
    fn dedup_examples() {
        let posts = vec![Post::new("1", "A post"), Post::new("2", "A post"), Post::new("3", "B")];
        let ids: Vec<_> = deduplicate(posts).into_iter().map(|p| p.id).collect();
        assert_eq!(ids, ["1", "3"]);

        let unique = vec![Post::new("1", "x"), Post::new("2", "y")];
        assert_eq!(deduplicate(unique.clone()), unique);

        let cased = vec![Post::new("1", "Took  Molly\tlast night"), Post::new("2", "took molly last NIGHT")];
        let ids: Vec<_> = deduplicate(cased).into_iter().map(|p| p.id).collect();
        assert_eq!(ids, ["1"]);
    }

    #[test]
    fn filter_examples() {
        let lexicon = SlangLexicon::seed();
        let vocab = SymptomVocabulary::seed();
        let posts = vec![
            Post::new("1", "I took smack last night"),
            Post::new("2", "Nice weather today"),
            Post::new("3", "felt nausea all morning"),
        ];
        let kept: Vec<_> = filter_relevant(posts, &lexicon, &vocab).into_iter().map(|p| p.id).collect();
        assert_eq!(kept, ["1", "3"]);
    }

    #[test]
    fn balance_examples() {
        let mut corpus = Vec::new();
        for i in 0..10 {
            corpus.push(labeled(&format!("h{i}"), DrugClass::Heroin));
        }
        for i in 0..4 {
            corpus.push(labeled(&format!("a{i}"), DrugClass::Alcohol));
        }
        let classes = [DrugClass::Heroin, DrugClass::Alcohol];
        let out = balance(corpus.clone(), BalanceStrategy::DownsampleToMin, &classes, 7).unwrap();
        assert_eq!(class_counts(&out), vec![(DrugClass::Alcohol, 4), (DrugClass::Heroin, 4)]);
        assert_eq!(out, balance(corpus.clone(), BalanceStrategy::DownsampleToMin, &classes, 7).unwrap());
        assert_eq!(balance(corpus.clone(), BalanceStrategy::None, &classes, 7).unwrap(), corpus);
        assert!(matches!(
            balance(corpus, BalanceStrategy::DownsampleToMin, &DrugClass::ALL, 7),
            Err(CorpusError::EmptyClass(DrugClass::Cocaine))
        ));

        let even: Vec<_> = DrugClass::ALL
            .iter()
            .flat_map(|&c| (0..5).map(move |i| labeled(&format!("{c}{i}"), c)))
            .collect();
        assert_eq!(balance(even.clone(), BalanceStrategy::DownsampleToMin, &DrugClass::ALL, 1).unwrap(), even);
    }

    #[test]
    fn split_sizes() {
        let corpus: Vec<_> = (0..10).map(|i| labeled(&i.to_string(), DrugClass::ALL[i % 2])).collect();
        let s = split(corpus, &SplitConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));

        let corpus: Vec<_> = (0..5114).map(|i| labeled(&i.to_string(), DrugClass::ALL[i % 8])).collect();
        let s = split(corpus, &SplitConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (4091, 1023));
    }

    #[test]
    fn split_undersized_class_goes_to_train() {
        let mut corpus: Vec<_> = (0..9).map(|i| labeled(&i.to_string(), DrugClass::Heroin)).collect();
        corpus.push(labeled("solo", DrugClass::Ketamine));
        let s = split(corpus, &SplitConfig::default()).unwrap();
        assert_eq!(s.undersized_classes, vec![DrugClass::Ketamine]);
        assert!(s.train.iter().any(|p| p.post.id == "solo"));
        assert_eq!(s.train.len(), 8);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(split(Vec::new(), &SplitConfig::default()), Err(CorpusError::Empty)));
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..SplitConfig::default()
        };
        assert!(split(vec![labeled("a", DrugClass::Heroin)], &cfg).is_err());
    }

    #[test]
    fn drug_class_parsing() {
        assert_eq!("lsd".parse::<DrugClass>().unwrap(), DrugClass::Lsd);
        assert_eq!("MDMA".parse::<DrugClass>().unwrap(), DrugClass::Ecstasy);
        assert!("Vodka".parse::<DrugClass>().is_err());
        assert_eq!(serde_json::to_string(&DrugClass::Lsd).unwrap(), "\"LSD\"");
        for c in DrugClass::ALL {
            assert_eq!(c.name().parse::<DrugClass>().unwrap(), c);
            assert_eq!(DrugClass::from_index(c.index()), Some(c));
        }
    }

    #[test]
    fn seed_vocabulary_shape() {
        let vocab = SymptomVocabulary::seed();
        assert_eq!(vocab.len(), 20);
        assert_eq!(vocab.index_of("Respiratory Depression"), Some(9));
        assert_eq!(vocab.resolve("nauseous"), vocab.index_of("nausea"));
        assert!(vocab.labels().iter().all(|l| *l == l.to_lowercase()));
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<LabeledPost>> {
        prop::collection::vec((0usize..8, "[a-c ]{0,6}"), 1..60).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (c, t))| LabeledPost {
                    post: Post::new(i.to_string(), format!("x{t}")),
                    drug: DrugClass::ALL[c],
                    symptoms: [0].into_iter().collect(),
                    flags: BTreeSet::new(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent(corpus in arb_corpus()) {
            let once = deduplicate(corpus);
            prop_assert_eq!(deduplicate(once.clone()), once);
        }

        #[test]
        fn filter_is_idempotent(texts in prop::collection::vec("(smack|nice|felt nausea|china white|table|X) ?[a-z]{0,5}", 0..20)) {
            let lexicon = SlangLexicon::seed();
            let vocab = SymptomVocabulary::seed();
            let posts: Vec<_> = texts.iter().enumerate().map(|(i, t)| Post::new(i.to_string(), t.clone())).collect();
            let once = filter_relevant(posts, &lexicon, &vocab);
            prop_assert_eq!(filter_relevant(once.clone(), &lexicon, &vocab), once);
        }

        #[test]
        fn split_is_a_partition(corpus in arb_corpus(), frac in 0.05f64..0.95, seed in any::<u64>(), strat in any::<bool>()) {
            let cfg = SplitConfig { train_fraction: frac, seed, stratify_by_drug: strat };
            let n = corpus.len();
            let s = split(corpus.clone(), &cfg).unwrap();
            let mut ids: Vec<String> = s.train.iter().chain(&s.test).map(|p| p.post.id.clone()).collect();
            ids.sort();
            let mut expected: Vec<String> = corpus.iter().map(|p| p.post.id.clone()).collect();
            expected.sort();
            prop_assert_eq!(ids, expected);
            let singles: usize = s.undersized_classes.len();
            if singles <= cfg.train_size(n) {
                prop_assert_eq!(s.train.len(), cfg.train_size(n));
            }
            let again = split(corpus, &cfg).unwrap();
            prop_assert_eq!(again.train, s.train);
        }

        #[test]
        fn balance_equalizes(corpus in arb_corpus(), seed in any::<u64>()) {
            let present: Vec<DrugClass> = class_counts(&corpus).into_iter().map(|(c, _)| c).collect();
            let min = class_counts(&corpus).into_iter().map(|(_, n)| n).min().unwrap();
            let out = balance(corpus, BalanceStrategy::DownsampleToMin, &present, seed).unwrap();
            for (_, count) in class_counts(&out) {
                prop_assert_eq!(count, min);
            }
        }
    }
}
