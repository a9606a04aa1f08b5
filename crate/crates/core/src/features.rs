//! TF-IDF vectorization.
//!
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, raw-count term frequency,
//! L2-normalized output. Vocabulary indices are assigned in lexicographic
//! token order so fitting does not depend on document order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::NormalizedDoc;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no document contains any token")]
    EmptyCorpus,
    #[error("no token reaches min_df = {0}")]
    EmptyVocabulary(usize),
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("vocabulary indices are not dense")]
    CorruptVocabulary,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Sparse vector with strictly increasing indices below `dim`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Sorts and merges duplicate indices. Panics if an index is `>= dim`.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            assert!(i < dim, "index {i} out of bounds for dimension {dim}");
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        SparseVector { dim, entries: merged }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        SparseVector {
            dim: values.len(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, x)| x * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            out[i] = x;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfParams {
    pub min_df: usize,
    pub max_features: Option<usize>,
}

impl Default for TfidfParams {
    fn default() -> Self {
        TfidfParams {
            min_df: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    params: TfidfParams,
    vocab: Vocabulary,
    idf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TfidfFile {
    version: u32,
    params: TfidfParams,
    vocab: Vec<(String, usize, usize)>,
    n_docs: usize,
}

impl Serialize for TfidfModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TfidfModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = TfidfFile::deserialize(deserializer)?;
        TfidfModel::from_file(file).map_err(serde::de::Error::custom)
    }
}

fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl TfidfModel {
    pub fn fit(docs: &[NormalizedDoc], params: TfidfParams) -> Result<Self, FeatureError> {
        let tokens: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
        Self::fit_tokens(&tokens, params)
    }

    pub fn fit_tokens<T: AsRef<[String]>>(docs: &[T], params: TfidfParams) -> Result<Self, FeatureError> {
        if docs.iter().all(|d| d.as_ref().is_empty()) {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.as_ref().iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, d)| d >= params.min_df).collect();
        if let Some(cap) = params.max_features {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            kept.truncate(cap);
            kept.sort_by(|a, b| a.0.cmp(b.0));
        }
        if kept.is_empty() {
            return Err(FeatureError::EmptyVocabulary(params.min_df));
        }
        let n_docs = docs.len();
        let vocab = Vocabulary {
            index: kept.iter().enumerate().map(|(i, (t, _))| (t.to_string(), i)).collect(),
            tokens: kept.iter().map(|(t, _)| t.to_string()).collect(),
            df: kept.iter().map(|(_, d)| *d).collect(),
            n_docs,
        };
        let idf = vocab.df.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        Ok(TfidfModel { params, vocab, idf })
    }

    pub fn params(&self) -> TfidfParams {
        self.params
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.vocab.index_of(token).map(|i| self.idf[i])
    }

    pub fn transform(&self, doc: &NormalizedDoc) -> SparseVector {
        self.transform_tokens(&doc.tokens)
    }

    /// Count-weighted idf, L2-normalized. Out-of-vocabulary tokens are
    /// ignored; an all-OOV document maps to the zero vector.
    pub fn transform_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.vocab.index_of(t.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }

    fn to_file(&self) -> TfidfFile {
        TfidfFile {
            version: MODEL_VERSION,
            params: self.params,
            vocab: self
                .vocab
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i, self.vocab.df[i]))
                .collect(),
            n_docs: self.vocab.n_docs,
        }
    }

    fn from_file(file: TfidfFile) -> Result<Self, FeatureError> {
        if file.version != MODEL_VERSION {
            return Err(FeatureError::Version(file.version));
        }
        let n = file.vocab.len();
        let mut tokens = vec![None; n];
        let mut df = vec![0; n];
        for (token, index, d) in file.vocab {
            if index >= n || tokens[index].is_some() || d == 0 {
                return Err(FeatureError::CorruptVocabulary);
            }
            tokens[index] = Some(token);
            df[index] = d;
        }
        let tokens: Vec<String> = tokens.into_iter().map(|t| t.expect("dense")).collect();
        let vocab = Vocabulary {
            index: tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect(),
            tokens,
            df,
            n_docs: file.n_docs,
        };
        let idf = vocab.df.iter().map(|&d| smoothed_idf(file.n_docs, d)).collect();
        Ok(TfidfModel {
            params: file.params,
            vocab,
            idf,
        })
    }

    pub fn to_json(&self) -> Result<String, FeatureError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        Ok(serde_json::from_str(text)?)
    }
}
