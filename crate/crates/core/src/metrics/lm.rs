//! N-gram language models and perplexity.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::tokenize;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";

pub trait LanguageModel {
    /// P(word | preceding tokens of the text). `history` is the full prefix;
    /// the model uses as much of it as its order needs.
    fn prob(&self, history: &[String], word: &str) -> f64;
}

/// Word n-gram model with additive smoothing:
/// P(w | h) = (c(h, w) + α) / (c(h) + α|V|), which is uniform for unseen
/// histories. Histories are padded with `<s>`; words outside the training
/// vocabulary map to `<unk>`, which is part of V.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    order: usize,
    alpha: f64,
    vocab: BTreeSet<String>,
    counts: HashMap<Vec<String>, HashMap<String, u64>>,
    totals: HashMap<Vec<String>, u64>,
}

pub fn train_lm<S: AsRef<str>>(texts: &[S], order: usize, alpha: f64) -> Result<NGramLm, MetricsError> {
    if order < 1 {
        return Err(MetricsError::InvalidParameter("order must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MetricsError::InvalidParameter("alpha must be positive".into()));
    }
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).filter(|d| !d.is_empty()).collect();
    if docs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut vocab: BTreeSet<String> = docs.iter().flatten().cloned().collect();
    vocab.insert(UNK.to_string());
    let mut lm = NGramLm { order, alpha, vocab, counts: HashMap::new(), totals: HashMap::new() };
    for doc in &docs {
        for i in 0..doc.len() {
            let ctx = lm.context(&doc[..i]);
            *lm.counts.entry(ctx.clone()).or_default().entry(doc[i].clone()).or_default() += 1;
            *lm.totals.entry(ctx).or_default() += 1;
        }
    }
    Ok(lm)
}

impl NGramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    fn map(&self, w: &str) -> String {
        if self.vocab.contains(w) {
            w.to_string()
        } else {
            UNK.to_string()
        }
    }

    /// The `order - 1` tokens before position `history.len()`, `<s>`-padded.
    fn context(&self, history: &[String]) -> Vec<String> {
        let n = self.order - 1;
        let start = history.len().saturating_sub(n);
        let mut ctx: Vec<String> = std::iter::repeat_n(BOS.to_string(), n - (history.len() - start)).collect();
        ctx.extend(history[start..].iter().map(|w| self.map(w)));
        ctx
    }
}

impl LanguageModel for NGramLm {
    fn prob(&self, history: &[String], word: &str) -> f64 {
        let ctx = self.context(history);
        let v = self.vocab.len() as f64;
        let total = self.totals.get(&ctx).copied().unwrap_or(0) as f64;
        let c = self.counts.get(&ctx).and_then(|m| m.get(&self.map(word))).copied().unwrap_or(0) as f64;
        (c + self.alpha) / (total + self.alpha * v)
    }
}

/// Context-free (unigram) model given by an explicit word → probability
/// table. Words missing from the table get `unknown`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub probs: HashMap<String, f64>,
    #[serde(default)]
    pub unknown: f64,
}

impl ProbabilityTable {
    pub fn new<'a>(entries: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self { probs: entries.into_iter().map(|(w, p)| (w.to_string(), p)).collect(), unknown: 0.0 }
    }

    pub fn uniform<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let words: Vec<&str> = words.into_iter().collect();
        let p = 1.0 / words.len() as f64;
        Self::new(words.into_iter().map(|w| (w, p)))
    }
}

impl LanguageModel for ProbabilityTable {
    fn prob(&self, _history: &[String], word: &str) -> f64 {
        self.probs.get(word).copied().unwrap_or(self.unknown)
    }
}

/// H = -(1/N) Σ ln P(w_i | w_1..w_{i-1}), in nats.
pub fn cross_entropy(lm: &dyn LanguageModel, text: &str) -> Result<f64, MetricsError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let total: f64 = (0..tokens.len()).map(|i| lm.prob(&tokens[..i], &tokens[i]).ln()).sum();
    Ok(-total / tokens.len() as f64)
}

pub fn perplexity(lm: &dyn LanguageModel, text: &str) -> Result<f64, MetricsError> {
    cross_entropy(lm, text).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distributions_sum_to_one() {
        let lm = train_lm(&["the cat sat on the mat", "the dog sat"], 2, 0.1).unwrap();
        for ctx in [vec![], vec!["the".to_string()], vec!["zebra".to_string()], vec!["sat".to_string()]] {
            let s: f64 = lm.vocabulary().iter().map(|w| lm.prob(&ctx, w)).sum();
            assert!((s - 1.0).abs() < 1e-9, "{ctx:?}: {s}");
        }
    }

    #[test]
    fn unseen_context_is_uniform() {
        let lm = train_lm(&["a b c"], 2, 0.5).unwrap();
        let v = lm.vocabulary().len() as f64;
        let p = lm.prob(&["c".to_string()], "a");
        assert!((p - 1.0 / v).abs() < 1e-12);
    }

    #[test]
    fn parameter_checks() {
        assert!(train_lm::<&str>(&[], 2, 0.1).is_err());
        assert!(train_lm(&["a"], 0, 0.1).is_err());
        assert!(train_lm(&["a"], 2, 0.0).is_err());
        let lm = train_lm(&["a"], 2, 0.1).unwrap();
        assert!(perplexity(&lm, " ... ").is_err());
    }

    #[test]
    fn certain_model_has_unit_perplexity() {
        let lm = ProbabilityTable::new([("a", 1.0)]);
        assert!((perplexity(&lm, "a a a").unwrap() - 1.0).abs() < 1e-12);
    }
}
