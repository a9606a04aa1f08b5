//! Text normalization: cleaning, tokenization, stopword removal, stemming
//! and slang/symptom scanning.
//!
//! Scanning runs on the cleaned, unstemmed token stream so multi-word
//! surface forms ("china white", "shortness of breath") survive; stemming
//! only shapes the feature tokens.

mod lexicon;
mod porter;
mod stopwords;

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{DrugClass, Post, SymptomVocabulary};

pub use lexicon::{LexiconEntry, LexiconError, SlangLexicon};
pub use porter::stem;
pub use stopwords::StopwordList;

static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[\w.]+").unwrap());

/// Lower-cases and strips URLs, @-mentions, hashtag markers, emoji,
/// digits and punctuation, collapsing whitespace to single spaces.
/// Apostrophes are deleted rather than spaced so contractions stay whole.
pub fn clean_text(text: &str) -> String {
    clean_text_with(text, true)
}

pub fn clean_text_with(text: &str, strip_mentions: bool) -> String {
    let without_urls = URL.replace_all(text, " ");
    let stripped = if strip_mentions {
        MENTION.replace_all(&without_urls, " ")
    } else {
        without_urls
    };
    let lowered = stripped.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for ch in lowered.chars() {
        if matches!(ch, '\'' | '\u{2019}' | '\u{02bc}') {
            continue;
        }
        if ch.is_alphabetic() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Splits cleaned text on whitespace, drops stopwords and stems the rest.
pub fn tokenize_and_reduce(text: &str, stemmer: StemmerKind, stop: &StopwordList) -> Vec<String> {
    text.split_whitespace()
        .filter(|t| !stop.contains(t))
        .map(|t| match stemmer {
            StemmerKind::PorterLike => stem(t),
            StemmerKind::None => t.to_string(),
        })
        .collect()
}

/// One longest-match hit of a [`PhraseMatcher`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseMatch<V> {
    pub value: V,
    pub phrase: String,
    /// Token offset of the first matched token.
    pub offset: usize,
    pub len: usize,
}

/// Maps multi-token phrases to values and scans token streams
/// left-to-right, taking the longest phrase at each position.
#[derive(Debug, Clone)]
pub struct PhraseMatcher<V> {
    phrases: HashMap<String, V>,
    max_tokens: usize,
}

impl<V: Clone> PhraseMatcher<V> {
    pub fn new<I: IntoIterator<Item = (String, V)>>(entries: I) -> Self {
        let mut phrases = HashMap::new();
        let mut max_tokens = 0;
        for (phrase, value) in entries {
            max_tokens = max_tokens.max(phrase.split(' ').count());
            phrases.insert(phrase, value);
        }
        PhraseMatcher { phrases, max_tokens }
    }

    pub fn scan<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PhraseMatch<V>> {
        let mut hits = Vec::new();
        let mut i = 0;
        let mut key = String::new();
        while i < tokens.len() {
            let longest = self.max_tokens.min(tokens.len() - i);
            let mut matched = None;
            for n in (1..=longest).rev() {
                key.clear();
                for (w, t) in tokens[i..i + n].iter().enumerate() {
                    if w > 0 {
                        key.push(' ');
                    }
                    key.push_str(t.as_ref());
                }
                if let Some(value) = self.phrases.get(&key) {
                    matched = Some((value.clone(), n));
                    break;
                }
            }
            match matched {
                Some((value, len)) => {
                    hits.push(PhraseMatch {
                        value,
                        phrase: key.clone(),
                        offset: i,
                        len,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        hits
    }

    pub fn has_match<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        !self.scan(tokens).is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugMention {
    pub drug: DrugClass,
    pub phrase: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomMention {
    pub symptom: usize,
    pub phrase: String,
    pub offset: usize,
}

/// Slang scan over cleaned, unstemmed text.
pub fn map_slang(cleaned: &str, lexicon: &SlangLexicon) -> Vec<DrugMention> {
    let tokens: Vec<&str> = cleaned.split_whitespace().collect();
    lexicon
        .matcher()
        .scan(&tokens)
        .into_iter()
        .map(|m| DrugMention {
            drug: m.value,
            phrase: m.phrase,
            offset: m.offset,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemmerKind {
    #[default]
    #[serde(alias = "porter")]
    PorterLike,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    pub strip_mentions: bool,
    pub stemmer: StemmerKind,
    pub stopword_list: String,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            strip_mentions: true,
            stemmer: StemmerKind::PorterLike,
            stopword_list: "english".into(),
        }
    }
}

/// Preprocessing output for one post. Mention offsets index the cleaned
/// token stream, which has `surface_len` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedDoc {
    pub post_id: String,
    pub tokens: Vec<String>,
    pub drug_mentions: Vec<DrugMention>,
    pub symptom_mentions: Vec<SymptomMention>,
    pub surface_len: usize,
}

/// Composes clean -> slang scan -> tokenize/stem -> symptom scan.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizeConfig,
    lexicon: SlangLexicon,
    symptoms: PhraseMatcher<usize>,
    stopwords: StopwordList,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown stopword list {0:?}")]
pub struct UnknownStopwordList(pub String);

impl Normalizer {
    /// Resolves `config.stopword_list` against the built-in lists.
    pub fn new(
        config: NormalizeConfig,
        lexicon: SlangLexicon,
        vocab: &SymptomVocabulary,
    ) -> Result<Self, UnknownStopwordList> {
        let stopwords =
            StopwordList::named(&config.stopword_list).ok_or_else(|| UnknownStopwordList(config.stopword_list.clone()))?;
        Ok(Self::with_stopwords(config, lexicon, vocab, stopwords))
    }

    pub fn with_stopwords(
        mut config: NormalizeConfig,
        lexicon: SlangLexicon,
        vocab: &SymptomVocabulary,
        stopwords: StopwordList,
    ) -> Self {
        config.stopword_list = stopwords.name().to_string();
        Normalizer {
            config,
            lexicon,
            symptoms: vocab.matcher(),
            stopwords,
        }
    }

    pub fn config(&self) -> &NormalizeConfig {
        &self.config
    }

    pub fn lexicon(&self) -> &SlangLexicon {
        &self.lexicon
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    pub fn normalize(&self, post: &Post) -> NormalizedDoc {
        self.normalize_text(&post.id, &post.text)
    }

    pub fn normalize_text(&self, id: &str, text: &str) -> NormalizedDoc {
        let cleaned = clean_text_with(text, self.config.strip_mentions);
        let surface: Vec<&str> = cleaned.split_whitespace().collect();
        let drug_mentions = self
            .lexicon
            .matcher()
            .scan(&surface)
            .into_iter()
            .map(|m| DrugMention {
                drug: m.value,
                phrase: m.phrase,
                offset: m.offset,
            })
            .collect();
        let tokens = tokenize_and_reduce(&cleaned, self.config.stemmer, &self.stopwords);
        let symptom_mentions = self
            .symptoms
            .scan(&surface)
            .into_iter()
            .map(|m| SymptomMention {
                symptom: m.value,
                phrase: m.phrase,
                offset: m.offset,
            })
            .collect();
        NormalizedDoc {
            post_id: id.to_string(),
            tokens,
            drug_mentions,
            symptom_mentions,
            surface_len: surface.len(),
        }
    }
}
