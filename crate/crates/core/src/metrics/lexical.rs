//! Type-token ratio, set overlap and TF-iDF cosine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::{tokenize, TfIdfIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalStats {
    /// Distinct tokens.
    pub types: usize,
    pub tokens: usize,
    pub ttr: f64,
}

pub fn ttr(text: &str) -> Result<LexicalStats, MetricsError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let types = tokens.iter().collect::<BTreeSet<_>>().len();
    Ok(LexicalStats { types, tokens: tokens.len(), ttr: types as f64 / tokens.len() as f64 })
}

/// |A ∩ B| / |A ∪ B|; 1 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Σ min(a_k, b_k) / Σ max(a_k, b_k) over multiset counts; 1 when both are empty.
pub fn multiset_jaccard<K: Ord>(a: &BTreeMap<K, usize>, b: &BTreeMap<K, usize>) -> f64 {
    let mut min_sum = 0;
    let mut max_sum = 0;
    for (k, &ca) in a {
        let cb = b.get(k).copied().unwrap_or(0);
        min_sum += ca.min(cb);
        max_sum += ca.max(cb);
    }
    for (k, &cb) in b {
        if !a.contains_key(k) {
            max_sum += cb;
        }
    }
    if max_sum == 0 {
        return 1.0;
    }
    min_sum as f64 / max_sum as f64
}

/// TF-iDF index over texts, tokenized with the shared tokenizer.
pub fn tfidf_index<S: AsRef<str>>(texts: &[S]) -> TfIdfIndex {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
    TfIdfIndex::new(&docs)
}

/// Cosine of the TF-iDF vectors of two texts, in [0, 1].
pub fn tfidf_cosine(a: &str, b: &str, index: &TfIdfIndex) -> f64 {
    index.cosine(&tokenize(a), &tokenize(b))
}
