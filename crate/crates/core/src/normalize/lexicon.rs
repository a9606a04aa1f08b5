use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{clean_text, PhraseMatcher};
use crate::corpus::DrugClass;

const SEED_TSV: &str = include_str!("../../data/seed_lexicon.tsv");
const MAX_PHRASE_TOKENS: usize = 3;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("row {row}: unknown canonical class {class:?}")]
    UnknownClass { row: usize, class: String },
    #[error("row {row}: duplicate phrase {phrase:?}")]
    DuplicatePhrase { row: usize, phrase: String },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub drug: DrugClass,
    pub note: Option<String>,
}

/// Surface phrase (1-3 cleaned, unstemmed tokens) to canonical drug class.
#[derive(Debug, Clone)]
pub struct SlangLexicon {
    version: String,
    entries: BTreeMap<String, LexiconEntry>,
    matcher: PhraseMatcher<DrugClass>,
}

impl PartialEq for SlangLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.entries == other.entries
    }
}

impl SlangLexicon {
    /// The bundled lexicon covering the canonical names and common street
    /// names of all eight classes.
    pub fn seed() -> Self {
        Self::parse_tsv(SEED_TSV, "seed-1").expect("bundled lexicon is valid")
    }

    /// Reads `phrase<TAB>class<TAB>note` rows. Class names accept the
    /// same aliases as [`DrugClass::from_str`]; `#` lines are comments.
    pub fn compile(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io(path.display().to_string(), e))?;
        let version = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::parse_tsv(&text, &version)
    }

    pub fn parse_tsv(text: &str, version: &str) -> Result<Self, LexiconError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let phrase = cols.next().unwrap_or_default();
            let class = cols.next().ok_or_else(|| LexiconError::Malformed {
                row,
                message: "expected phrase<TAB>canonical_class".into(),
            })?;
            let note = cols.next().map(str::trim).filter(|n| !n.is_empty()).map(str::to_string);
            rows.push((row, phrase.to_string(), class.to_string(), note));
        }
        Self::from_rows(rows, version)
    }

    fn from_rows(rows: Vec<(usize, String, String, Option<String>)>, version: &str) -> Result<Self, LexiconError> {
        let mut entries = BTreeMap::new();
        for (row, phrase, class, note) in rows {
            let key = clean_text(&phrase);
            let tokens = key.split(' ').filter(|t| !t.is_empty()).count();
            if tokens == 0 || tokens > MAX_PHRASE_TOKENS {
                return Err(LexiconError::Malformed {
                    row,
                    message: format!("phrase {phrase:?} must have 1 to {MAX_PHRASE_TOKENS} tokens"),
                });
            }
            let drug = DrugClass::from_str(&class).map_err(|_| LexiconError::UnknownClass {
                row,
                class: class.trim().to_string(),
            })?;
            if entries.contains_key(&key) {
                return Err(LexiconError::DuplicatePhrase { row, phrase: key });
            }
            entries.insert(key, LexiconEntry { drug, note });
        }
        let matcher = PhraseMatcher::new(entries.iter().map(|(k, e)| (k.clone(), e.drug)));
        Ok(SlangLexicon {
            version: version.to_string(),
            entries,
            matcher,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, phrase: &str) -> Option<DrugClass> {
        self.entries.get(&clean_text(phrase)).map(|e| e.drug)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &LexiconEntry)> {
        self.entries.iter()
    }

    pub fn matcher(&self) -> &PhraseMatcher<DrugClass> {
        &self.matcher
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# phrase\tcanonical_class\tnote\n");
        for (phrase, entry) in &self.entries {
            out.push_str(phrase);
            out.push('\t');
            out.push_str(entry.drug.name());
            if let Some(note) = &entry.note {
                out.push('\t');
                out.push_str(note);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_and_aliases() {
        let lex = SlangLexicon::parse_tsv("smack\tHeroin\nmolly\tMDMA\n", "t").unwrap();
        assert_eq!(lex.lookup("smack"), Some(DrugClass::Heroin));
        assert_eq!(lex.lookup("Molly"), Some(DrugClass::Ecstasy));
    }

    #[test]
    fn rejects_unknown_class_naming_row() {
        let err = SlangLexicon::parse_tsv("# header\nsmack\tHeroin\nzzz\tVodka\n", "t").unwrap_err();
        assert!(matches!(err, LexiconError::UnknownClass { row: 3, .. }));
        assert_eq!(err.to_string(), "row 3: unknown canonical class \"Vodka\"");
    }

    #[test]
    fn rejects_duplicates_and_long_phrases() {
        assert!(matches!(
            SlangLexicon::parse_tsv("smack\tHeroin\nSmack\tHeroin\n", "t"),
            Err(LexiconError::DuplicatePhrase { row: 2, .. })
        ));
        assert!(SlangLexicon::parse_tsv("a b c d\tHeroin\n", "t").is_err());
        assert!(SlangLexicon::parse_tsv("smack\n", "t").is_err());
    }

    #[test]
    fn seed_excludes_out_of_schema_slang() {
        let lex = SlangLexicon::seed();
        assert_eq!(lex.lookup("bars"), None);
        assert_eq!(lex.lookup("xanax"), None);
        assert!(lex.entries().all(|(k, _)| *k == clean_text(k)));
    }

    #[test]
    fn tsv_round_trip() {
        let lex = SlangLexicon::seed();
        let again = SlangLexicon::parse_tsv(&lex.to_tsv(), lex.version()).unwrap();
        assert_eq!(again, lex);
    }
}
