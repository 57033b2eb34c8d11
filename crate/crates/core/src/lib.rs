//! Caller simulation engine for emergency call-taker training.
//!
//! The crate is organised along the life of a simulated call:
//!
//! - [`corpus`]: tag taxonomy and annotated call transcripts.
//! - [`knowledge`]: factual bases (gazetteer, connectivity map, protocol trees)
//!   and the tag-indexed retrievable base.
//! - [`copilot`]: incident classifier and extractive answerer used by the checks.
//! - [`generation`]: backend profile selection, prompt assembly and backend clients.
//! - [`validation`]: the bounded generate/check loop and feedback capture.
//! - [`metrics`]: realism, authenticity and equity metrics.
//! - [`harness`]: scripted replay, ablation matrix and report generation.

pub mod clock;
pub mod copilot;
pub mod corpus;
pub mod engine;
pub mod generation;
pub mod harness;
pub mod knowledge;
pub mod metrics;
pub mod text;
pub mod validation;

pub use clock::{Clock, ManualClock, SystemClock};
pub use corpus::{AnnotatedCall, CallerImage, IncidentSpecification, Label, Speaker, TagTaxonomy, Turn};
pub use generation::{Ablation, SimulationInstruction};
pub use knowledge::KnowledgeSet;
pub use validation::{SessionState, ValidationReport};

/// Bundled default data files.
pub mod defaults {
    pub const TAXONOMY: &str = include_str!("../data/taxonomy.toml");
    pub const PROFILES: &str = include_str!("../data/profiles.toml");
    pub const QUESTIONS: &str = include_str!("../data/questions.toml");
    pub const SENTIMENT_LEXICON: &str = include_str!("../data/sentiment.tsv");
    pub const EMOTION_LEXICON: &str = include_str!("../data/emotions.tsv");
    pub const GRAMMAR: &str = include_str!("../data/grammar.cfg");
}
