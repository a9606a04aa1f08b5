//! Seeded synthetic corpora with a known answer: every class has its own
//! pseudo-word vocabulary, and symptoms arrive in co-occurring clusters,
//! each symptom leaving its own marker words in the text.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DrugClass, LabeledPost, Post, SymptomSet, SymptomVocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub docs_per_class: usize,
    /// Class words per document before symptom markers are added.
    pub doc_len: usize,
    /// Distinct words in each class vocabulary.
    pub words_per_class: usize,
    /// Chance that any token is swapped for a word from the shared pool.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            docs_per_class: 200,
            doc_len: 12,
            words_per_class: 15,
            noise: 0.1,
            seed: 7,
        }
    }
}

/// Symptom clusters by label name; a post draws one or two of them.
pub const CLUSTERS: &[&[&str]] = &[
    &["respiratory depression", "drowsiness", "loss of consciousness"],
    &["tachycardia", "sweating", "hyperthermia"],
    &["hallucinations", "paranoia", "confusion"],
    &["nausea", "dizziness"],
    &["tremors", "agitation", "restlessness"],
    &["fainting", "blurred vision", "headache"],
    &["shortness of breath", "coma"],
    &["dissociation"],
];

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub posts: Vec<LabeledPost>,
    pub vocab: SymptomVocabulary,
    pub class_words: Vec<Vec<String>>,
    pub symptom_words: Vec<Vec<String>>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "l", "m", "n", "r", "t", "v"];
const VOWELS: &[&str] = &["a", "o", "u"];
const CODAS: &[&str] = &["k", "p", "x", "z"];

/// Letters only, ending in a consonant the stemmer never strips.
fn pseudo_word<R: Rng>(rng: &mut R, used: &mut BTreeSet<String>) -> String {
    loop {
        let mut w = String::new();
        for _ in 0..3 {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(VOWELS.choose(rng).expect("non-empty"));
        }
        w.push_str(CODAS.choose(rng).expect("non-empty"));
        if used.insert(w.clone()) {
            return w;
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = SymptomVocabulary::seed();
    let mut used = BTreeSet::new();
    let class_words: Vec<Vec<String>> = DrugClass::ALL
        .iter()
        .map(|_| (0..cfg.words_per_class).map(|_| pseudo_word(&mut rng, &mut used)).collect())
        .collect();
    let symptom_words: Vec<Vec<String>> = (0..vocab.len())
        .map(|_| (0..2).map(|_| pseudo_word(&mut rng, &mut used)).collect())
        .collect();
    let shared: Vec<String> = (0..40).map(|_| pseudo_word(&mut rng, &mut used)).collect();
    let clusters: Vec<Vec<usize>> = CLUSTERS
        .iter()
        .map(|c| {
            c.iter()
                .map(|l| vocab.index_of(l).expect("cluster labels are in the seed vocabulary"))
                .collect()
        })
        .collect();

    let mut posts = Vec::with_capacity(cfg.docs_per_class * DrugClass::ALL.len());
    for (ci, class) in DrugClass::ALL.into_iter().enumerate() {
        for i in 0..cfg.docs_per_class {
            let mut symptoms = SymptomSet::new();
            let n_clusters = rng.random_range(1..=2);
            for c in clusters.choose_multiple(&mut rng, n_clusters) {
                symptoms.extend(c.iter().cloned());
            }
            let mut tokens: Vec<String> = (0..cfg.doc_len)
                .map(|_| class_words[ci].choose(&mut rng).expect("non-empty").clone())
                .collect();
            for &s in &symptoms {
                tokens.push(symptom_words[s].choose(&mut rng).expect("non-empty").clone());
            }
            for t in tokens.iter_mut() {
                if rng.random_bool(cfg.noise) {
                    *t = shared.choose(&mut rng).expect("non-empty").clone();
                }
            }
            tokens.shuffle(&mut rng);
            posts.push(LabeledPost {
                post: Post::new(format!("syn-{}-{i}", class.name().to_ascii_lowercase()), tokens.join(" ")),
                drug: class,
                symptoms,
                flags: BTreeSet::new(),
            });
        }
    }
    posts.shuffle(&mut rng);
    SyntheticCorpus {
        posts,
        vocab,
        class_words,
        symptom_words,
    }
}
