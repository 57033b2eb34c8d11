//! Shared tokenization and TF-iDF vector space.
//!
//! Every metric and retrieval path goes through [`tokenize`] so that scores
//! computed by different modules agree on what a "word" is.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

/// Splits on every non-alphanumeric character (Unicode aware) and lower-cases.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

/// Tokens with stop words removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_stop_word(t)).collect()
}

const STOP_WORDS: &[&str] = &[
    "a",
    "about",
    "after",
    "again",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "both",
    "but",
    "by",
    "can",
    "could",
    "d",
    "did",
    "do",
    "does",
    "doing",
    "don",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "ll",
    "m",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "re",
    "s",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "t",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "ve",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "okay",
    "ok",
    "yeah",
    "uh",
    "um",
    "oh",
    "well",
];

static STOP_SET: LazyLock<HashSet<&'static str>> = LazyLock::new(|| STOP_WORDS.iter().copied().collect());

pub fn is_stop_word(token: &str) -> bool {
    STOP_SET.contains(token)
}

/// Splits text into sentences on `.`, `!` and `?`. Fragments without any
/// alphanumeric content are dropped.
pub fn sentences(text: &str) -> Vec<String> {
    text.split(['.', '!', '?', '\n'])
        .map(str::trim)
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

/// Sparse term-weight vector keyed by term. Ordered so that sums are
/// reproducible bit-for-bit across runs.
pub type SparseVector = BTreeMap<String, f64>;

pub fn dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(t, w)| large.get(t).map(|v| w * v)).sum()
}

pub fn norm(v: &SparseVector) -> f64 {
    v.values().map(|w| w * w).sum::<f64>().sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Scales `v` to unit length. Returns `false` (leaving `v` untouched) when the
/// vector has zero norm.
pub fn normalize(v: &mut SparseVector) -> bool {
    let n = norm(v);
    if n == 0.0 {
        return false;
    }
    for w in v.values_mut() {
        *w /= n;
    }
    true
}

/// Document-frequency table over a fixed document collection.
///
/// TF(t, d) = f(t, d) / |d| and iDF(t) = ln(N / df(t)); terms outside the
/// collection carry no weight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfIndex {
    doc_freq: BTreeMap<String, u32>,
    n_docs: u32,
}

impl TfIdfIndex {
    pub fn new<I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[String]>,
    {
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<&String> = doc.as_ref().iter().collect();
            for term in unique {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
        }
        Self { doc_freq, n_docs }
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.doc_freq.keys().map(String::as_str)
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// `None` for terms that never occur in the collection.
    pub fn idf(&self, term: &str) -> Option<f64> {
        match self.doc_freq(term) {
            0 => None,
            df => Some((self.n_docs as f64 / df as f64).ln()),
        }
    }

    /// Term frequencies normalised by document length.
    pub fn term_frequencies(tokens: &[String]) -> SparseVector {
        let mut tf = SparseVector::new();
        if tokens.is_empty() {
            return tf;
        }
        for t in tokens {
            *tf.entry(t.clone()).or_default() += 1.0;
        }
        let len = tokens.len() as f64;
        for w in tf.values_mut() {
            *w /= len;
        }
        tf
    }

    /// TF-iDF weights; zero-weight terms are omitted.
    pub fn vector(&self, tokens: &[String]) -> SparseVector {
        Self::term_frequencies(tokens)
            .into_iter()
            .filter_map(|(t, tf)| {
                let w = tf * self.idf(&t)?;
                (w != 0.0).then_some((t, w))
            })
            .collect()
    }

    pub fn cosine(&self, a: &[String], b: &[String]) -> f64 {
        cosine(&self.vector(a), &self.vector(b)).clamp(0.0, 1.0)
    }
}
