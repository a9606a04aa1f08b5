//! Detection of drug use and overdose symptoms in social-media posts.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`corpus`]: JSONL ingestion, deduplication, relevance filtering,
//!   class balancing and seeded train/test splits.
//! - [`normalize`]: text cleaning, stopword removal, Porter stemming and
//!   longest-match slang/symptom scanning.
//! - [`features`]: TF-IDF vectorization into L2-normalized sparse vectors.
//! - [`classifiers`]: logistic regression, multinomial naive Bayes, kNN,
//!   CART decision trees and random forests, plus a one-vs-rest wrapper for
//!   multi-label symptom prediction.
//! - [`metrics`]: precision/recall/F1/accuracy, micro/macro/weighted
//!   aggregates, multi-label metrics and Fleiss' kappa.
//! - [`annotate`]: the LLM-assisted, human-corrected annotation loop backed
//!   by an append-only event log.
//! - [`synthetic`]: seeded synthetic corpora for sanity checks and benches.

pub mod annotate;
pub mod classifiers;
pub mod corpus;
pub mod features;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod synthetic;

pub use corpus::{DrugClass, Flag, LabeledPost, Post, SplitConfig, SymptomSet, SymptomVocabulary};
pub use features::{SparseVector, TfidfModel, TfidfParams};
pub use normalize::{NormalizeConfig, NormalizedDoc, Normalizer, SlangLexicon};
