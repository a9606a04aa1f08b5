//! Stopword lists. Entries are stored the way [`super::clean_text`]
//! emits them, so contractions appear without apostrophes.

use std::collections::HashSet;
use std::path::Path;

#[rustfmt::skip]
const ENGLISH: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "youre", "youve", "youll",
    "youd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "shes",
    "her", "hers", "herself", "it", "its", "itself", "they", "them", "their", "theirs",
    "themselves", "what", "which", "who", "whom", "this", "that", "thatll", "these", "those", "am",
    "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until",
    "while", "of", "at", "by", "for", "with", "about", "against", "between", "into", "through",
    "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on",
    "off", "over", "under", "again", "further", "then", "once", "here", "there", "when", "where",
    "why", "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such",
    "no", "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
    "will", "just", "don", "dont", "should", "shouldve", "now", "d", "ll", "m", "o", "re", "ve",
    "y", "ain", "aren", "arent", "couldn", "couldnt", "didn", "didnt", "doesn", "doesnt", "hadn",
    "hadnt", "hasn", "hasnt", "haven", "havent", "isn", "isnt", "ma", "mightn", "mightnt",
    "mustn", "mustnt", "needn", "neednt", "shan", "shant", "shouldn", "shouldnt", "wasn", "wasnt",
    "weren", "werent", "won", "wont", "wouldn", "wouldnt", "im", "ive", "id",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    name: String,
    words: HashSet<String>,
}

impl StopwordList {
    /// Built-in lists: `english` and `none`.
    pub fn named(name: &str) -> Option<Self> {
        let words: &[&str] = match name {
            "english" => ENGLISH,
            "none" => &[],
            _ => return None,
        };
        Some(StopwordList {
            name: name.to_string(),
            words: words.iter().map(|w| w.to_string()).collect(),
        })
    }

    pub fn english() -> Self {
        Self::named("english").expect("built-in")
    }

    pub fn from_words<I, S>(name: impl Into<String>, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordList {
            name: name.into(),
            words: words
                .into_iter()
                .map(|w| super::clean_text(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One word per line.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_words(path.display().to_string(), text.lines()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    /// Sorted words, for serialization.
    pub fn words(&self) -> Vec<String> {
        let mut w: Vec<String> = self.words.iter().cloned().collect();
        w.sort();
        w
    }
}
