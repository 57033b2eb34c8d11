//! Factual bases and the retrievable base.

mod connectivity;
mod gazetteer;
mod protocol;
mod retrieval;

use std::path::Path;

use thiserror::Error;

pub use connectivity::ConnectivityMap;
pub use gazetteer::{
    lookup_address, normalize_address, AddressGazetteer, AddressMatch, AddressRecord, NORMALIZATION_VERSION,
};
pub use protocol::{next_questions, Branch, ProtocolNode, ProtocolSet, ProtocolTree};
pub use retrieval::{RetrievableBase, RetrievalEntry, Retrieved};

use crate::corpus::{AnnotatedCall, CorpusError, LabelSet, TagTaxonomy};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed connectivity map: {0}")]
    Map(String),
    #[error("protocol for {incident_type:?}: {message}")]
    Protocol { incident_type: String, message: String },
    #[error("protocol for {incident_type:?} has a cycle through node {node:?}")]
    ProtocolCycle { incident_type: String, node: String },
    #[error("no protocol tree for incident type {0:?}")]
    NoProtocol(String),
    #[error("cannot build knowledge from an empty corpus")]
    EmptyCorpus,
    #[error("unknown tag label {0:?}")]
    UnknownTag(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl KnowledgeError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        KnowledgeError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Everything the generator may consult. Immutable once built.
#[derive(Debug, Clone)]
pub struct KnowledgeSet {
    pub taxonomy: TagTaxonomy,
    pub gazetteer: AddressGazetteer,
    pub connectivity: ConnectivityMap,
    pub protocols: ProtocolSet,
    pub retrievable: RetrievableBase,
}

impl KnowledgeSet {
    pub fn from_parts(
        corpus: &[AnnotatedCall],
        taxonomy: TagTaxonomy,
        gazetteer: AddressGazetteer,
        connectivity: ConnectivityMap,
        protocols: ProtocolSet,
    ) -> Result<Self, KnowledgeError> {
        let retrievable = RetrievableBase::build(corpus, &taxonomy)?;
        Ok(Self { taxonomy, gazetteer, connectivity, protocols, retrievable })
    }

    pub fn retrieve(&self, tags: &LabelSet, query: &str, k: usize) -> Result<Vec<Retrieved<'_>>, KnowledgeError> {
        self.retrievable.retrieve(tags, query, k)
    }
}

pub fn build_knowledge(
    corpus: &[AnnotatedCall],
    taxonomy: TagTaxonomy,
    gazetteer_file: &Path,
    map_file: &Path,
    protocol_file: &Path,
) -> Result<KnowledgeSet, KnowledgeError> {
    if corpus.is_empty() {
        return Err(KnowledgeError::EmptyCorpus);
    }
    KnowledgeSet::from_parts(
        corpus,
        taxonomy,
        AddressGazetteer::load(gazetteer_file)?,
        ConnectivityMap::load(map_file)?,
        ProtocolSet::load(protocol_file)?,
    )
}
