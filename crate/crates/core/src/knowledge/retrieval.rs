//! Tag-indexed retrievable base over annotated calls.
//!
//! Each call becomes one entry holding its caller excerpts, its label set and
//! a TF-iDF vector of its full transcript (stop words removed). Retrieval is
//! conjunctive over tags and ranked by cosine similarity to the query.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;
use crate::corpus::{AnnotatedCall, LabelSet, TagTaxonomy};
use crate::text::{content_tokens, cosine, SparseVector, TfIdfIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub call_id: String,
    /// Caller utterances, in transcript order.
    pub excerpts: Vec<String>,
    pub text: String,
    pub labels: LabelSet,
    pub vector: SparseVector,
    /// The transcript carries no weighted term (all stop words or all
    /// terms present in every document).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub entry: &'a RetrievalEntry,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RetrievableBase {
    entries: Vec<RetrievalEntry>,
    index: TfIdfIndex,
    vocabulary: BTreeMap<String, usize>,
    known_labels: LabelSet,
}

impl RetrievableBase {
    pub fn build(corpus: &[AnnotatedCall], taxonomy: &TagTaxonomy) -> Result<Self, KnowledgeError> {
        if corpus.is_empty() {
            return Err(KnowledgeError::EmptyCorpus);
        }
        let docs: Vec<Vec<String>> = corpus.iter().map(|c| content_tokens(&c.full_text())).collect();
        let index = TfIdfIndex::new(&docs);
        let vocabulary = index.vocabulary().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
        let mut entries = Vec::with_capacity(corpus.len());
        for (call, tokens) in corpus.iter().zip(&docs) {
            let labels = call.labels();
            taxonomy.resolve_all(&labels)?;
            let vector = index.vector(tokens);
            entries.push(RetrievalEntry {
                call_id: call.id.clone(),
                excerpts: call.caller_turns().map(|t| t.text.clone()).collect(),
                text: call.full_text(),
                labels,
                degenerate: vector.is_empty(),
                vector,
            });
        }
        let mut known_labels = LabelSet::new();
        for family in [
            crate::corpus::Family::IncidentType,
            crate::corpus::Family::ScenarioContext,
            crate::corpus::Family::SpecialRequest,
            crate::corpus::Family::Age,
            crate::corpus::Family::Emotion,
            crate::corpus::Family::Vulnerable,
        ] {
            known_labels.extend(taxonomy.labels_in(family).iter().cloned());
        }
        Ok(Self { entries, index, vocabulary, known_labels })
    }

    pub fn entries(&self) -> &[RetrievalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self) -> &TfIdfIndex {
        &self.index
    }

    /// Dimension assigned to a vocabulary term.
    pub fn dimension(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn query_vector(&self, query: &str) -> SparseVector {
        self.index.vector(&content_tokens(query))
    }

    /// Entries carrying every label in `tags`, ranked by descending cosine
    /// similarity to `query`; ties go to the smaller call id. At most `k`.
    pub fn retrieve(&self, tags: &LabelSet, query: &str, k: usize) -> Result<Vec<Retrieved<'_>>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        if let Some(unknown) = tags.iter().find(|t| !self.known_labels.contains(*t)) {
            return Err(KnowledgeError::UnknownTag(unknown.to_string()));
        }
        let q = self.query_vector(query);
        let mut hits: Vec<Retrieved<'_>> = self
            .entries
            .iter()
            .filter(|e| tags.is_subset(&e.labels))
            .map(|e| Retrieved { entry: e, score: cosine(&q, &e.vector) })
            .collect();
        hits.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.entry.call_id.cmp(&b.entry.call_id))
        });
        hits.truncate(k);
        Ok(hits)
    }
}
