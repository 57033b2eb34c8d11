//! Validation support models: an incident-type classifier over conversation
//! turns and an extractive answerer over single turns.
//!
//! The defaults are lexical: a nearest-centroid TF-iDF classifier and a
//! pattern-based answerer. Remote model implementations can be plugged in
//! through [`IncidentClassifier`] and [`ExtractiveAnswerer`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{join_turns, AnnotatedCall, Label, Turn};
use crate::knowledge::AddressGazetteer;
use crate::text::{content_tokens, cosine, normalize, SparseVector};

#[derive(Debug, Error)]
pub enum CopilotError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("label {0:?} has no usable tokens")]
    NoUsableTokens(String),
    #[error("cannot classify an empty turn list")]
    EmptyTurns,
    #[error("no pattern set registered for question {0:?}")]
    UnregisteredQuestion(String),
    #[error("invalid pattern for question {question:?}: {message}")]
    BadPattern { question: String, message: String },
    #[error("model file error: {0}")]
    Model(String),
    #[error("remote model error: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub confidence: f64,
}

pub trait IncidentClassifier: Send + Sync {
    fn classify(&self, turns: &[Turn]) -> Result<Classification, CopilotError>;
}

/// Nearest-centroid classifier over TF-iDF vectors.
///
/// Term weights use iDF = ln(1 + N / df) so that terms shared by every
/// training call still contribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub n_docs: u32,
    pub doc_freq: BTreeMap<String, u32>,
    pub centroids: BTreeMap<Label, SparseVector>,
    pub fingerprint: String,
}

fn corpus_fingerprint(corpus: &[AnnotatedCall]) -> String {
    let mut h = Sha256::new();
    for c in corpus {
        h.update(c.id.as_bytes());
        h.update([0]);
        h.update(c.is.incident_type.as_str().as_bytes());
        h.update([0]);
        h.update(c.full_text().as_bytes());
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

impl CentroidModel {
    fn idf(&self, term: &str) -> Option<f64> {
        self.doc_freq.get(term).map(|&df| (1.0 + self.n_docs as f64 / df as f64).ln())
    }

    /// Unnormalised TF-iDF vector of free text under the model vocabulary.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let tokens = content_tokens(text);
        let mut v = SparseVector::new();
        if tokens.is_empty() {
            return v;
        }
        let len = tokens.len() as f64;
        for t in &tokens {
            if let Some(idf) = self.idf(t) {
                *v.entry(t.clone()).or_default() += idf / len;
            }
        }
        v
    }

    /// Cosine similarity of `text` to every centroid, in label order.
    pub fn scores(&self, text: &str) -> Vec<(Label, f64)> {
        let q = self.vectorize(text);
        self.centroids.iter().map(|(l, c)| (l.clone(), cosine(&q, c))).collect()
    }

    pub fn classify_text(&self, text: &str) -> Classification {
        let mut best: Option<(Label, f64)> = None;
        for (label, score) in self.scores(text) {
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((label, score));
            }
        }
        let (label, score) = best.expect("trained model has at least one centroid");
        Classification { label, confidence: score.clamp(0.0, 1.0) }
    }

    pub fn save(&self, path: &Path) -> Result<(), CopilotError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CopilotError::Model(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CopilotError::Model(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CopilotError> {
        let text = std::fs::read_to_string(path).map_err(|e| CopilotError::Model(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CopilotError::Model(e.to_string()))
    }
}

impl IncidentClassifier for CentroidModel {
    fn classify(&self, turns: &[Turn]) -> Result<Classification, CopilotError> {
        if turns.is_empty() {
            return Err(CopilotError::EmptyTurns);
        }
        Ok(self.classify_text(&join_turns(turns)))
    }
}

/// One centroid per incident type: the normalised mean of the normalised
/// call vectors carrying that type.
pub fn train_centroid_classifier(corpus: &[AnnotatedCall]) -> Result<CentroidModel, CopilotError> {
    if corpus.is_empty() {
        return Err(CopilotError::EmptyCorpus);
    }
    let docs: Vec<Vec<String>> = corpus.iter().map(|c| content_tokens(&c.full_text())).collect();
    let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
    for d in &docs {
        let mut uniq: Vec<&String> = d.iter().collect();
        uniq.sort();
        uniq.dedup();
        for t in uniq {
            *doc_freq.entry(t.clone()).or_default() += 1;
        }
    }
    let mut model = CentroidModel {
        n_docs: corpus.len() as u32,
        doc_freq,
        centroids: BTreeMap::new(),
        fingerprint: corpus_fingerprint(corpus),
    };

    let mut sums: BTreeMap<Label, SparseVector> = BTreeMap::new();
    for call in corpus {
        let mut v = model.vectorize(&call.full_text());
        let sum = sums.entry(call.is.incident_type.clone()).or_default();
        if normalize(&mut v) {
            for (t, w) in v {
                *sum.entry(t).or_default() += w;
            }
        }
    }
    for (label, mut sum) in sums {
        if !normalize(&mut sum) {
            return Err(CopilotError::NoUsableTokens(label.to_string()));
        }
        model.centroids.insert(label, sum);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuestionId(pub String);

impl QuestionId {
    pub fn address() -> Self {
        QuestionId("address".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub present: bool,
    /// Contiguous substring of the turn; set iff `present`.
    pub span: Option<String>,
}

impl Answer {
    pub fn absent() -> Self {
        Answer { present: false, span: None }
    }
}

pub trait ExtractiveAnswerer: Send + Sync {
    fn answer(&self, turn: &Turn, question: &QuestionId) -> Result<Answer, CopilotError>;
}

#[derive(Deserialize)]
struct QuestionFile {
    questions: BTreeMap<String, Vec<String>>,
}

/// Pattern-registry answerer. The span is the longest match over all
/// patterns registered for the question (earliest on ties).
///
/// With a gazetteer attached, address spans are trimmed to their longest
/// word-prefix that resolves in the gazetteer, if any.
#[derive(Debug, Clone)]
pub struct LexicalAnswerer {
    patterns: HashMap<QuestionId, Vec<Regex>>,
    gazetteer: Option<AddressGazetteer>,
}

impl LexicalAnswerer {
    pub fn new() -> Self {
        Self { patterns: HashMap::new(), gazetteer: None }
    }

    /// The bundled preset-question registry.
    pub fn bundled() -> Self {
        Self::from_toml(crate::defaults::QUESTIONS).expect("bundled question registry is valid")
    }

    /// `[questions]` table mapping question id to a list of regular expressions.
    pub fn from_toml(text: &str) -> Result<Self, CopilotError> {
        let file: QuestionFile = toml::from_str(text).map_err(|e| CopilotError::Model(e.to_string()))?;
        let mut a = Self::new();
        for (q, patterns) in file.questions {
            a.register(QuestionId(q), &patterns)?;
        }
        Ok(a)
    }

    pub fn register(&mut self, question: QuestionId, patterns: &[String]) -> Result<(), CopilotError> {
        let compiled = patterns
            .iter()
            .map(|p| {
                Regex::new(p)
                    .map_err(|e| CopilotError::BadPattern { question: question.0.clone(), message: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.patterns.entry(question).or_default().extend(compiled);
        Ok(())
    }

    pub fn with_gazetteer(mut self, gazetteer: AddressGazetteer) -> Self {
        self.gazetteer = Some(gazetteer);
        self
    }

    fn gazetteer_trim<'t>(&self, span: &'t str) -> &'t str {
        let Some(g) = &self.gazetteer else { return span };
        if g.contains(span) {
            return span;
        }
        let ends: Vec<usize> =
            span.char_indices().filter(|(_, c)| c.is_whitespace() || *c == ',').map(|(i, _)| i).collect();
        for &end in ends.iter().rev() {
            let prefix = span[..end].trim_end_matches([',', ' ']);
            if !prefix.is_empty() && g.contains(prefix) {
                return prefix;
            }
        }
        span
    }
}

impl Default for LexicalAnswerer {
    fn default() -> Self {
        Self::bundled()
    }
}

impl ExtractiveAnswerer for LexicalAnswerer {
    fn answer(&self, turn: &Turn, question: &QuestionId) -> Result<Answer, CopilotError> {
        let patterns =
            self.patterns.get(question).ok_or_else(|| CopilotError::UnregisteredQuestion(question.0.clone()))?;
        let mut best: Option<(usize, usize)> = None;
        for re in patterns {
            for m in re.find_iter(&turn.text) {
                let better = match best {
                    None => true,
                    Some((s, e)) => {
                        let (len, best_len) = (m.end() - m.start(), e - s);
                        len > best_len || (len == best_len && m.start() < s)
                    }
                };
                if better {
                    best = Some((m.start(), m.end()));
                }
            }
        }
        Ok(match best {
            Some((s, e)) => {
                let mut span = &turn.text[s..e];
                if *question == QuestionId::address() {
                    span = self.gazetteer_trim(span);
                }
                Answer { present: true, span: Some(span.to_string()) }
            }
            None => Answer::absent(),
        })
    }
}
