//! Realism, authenticity and equity metrics.
//!
//! Every metric tokenizes with [`crate::text::tokenize`].

mod equity;
mod lexical;
mod lm;
mod meteor;
mod readability;
mod sentiment;
mod syntax;

use thiserror::Error;

pub use equity::{
    emotion_matches, margin_from_similarities, margin_score, margin_with, pairwise_mean, tag_accuracy,
    CentroidTagPredictor, MarginResult, SimilarityModel, SimilarityWeights, TagAccuracyResult, TagCall, TagPredictor,
    TextFeatures,
};
pub use lexical::{jaccard, multiset_jaccard, tfidf_cosine, tfidf_index, ttr, LexicalStats};
pub use lm::{cross_entropy, perplexity, train_lm, LanguageModel, NGramLm, ProbabilityTable, BOS, UNK};
pub use meteor::{meteor, stem, MeteorBreakdown};
pub use readability::{fog_similarity, gunning_fog, syllables, FogBreakdown};
pub use sentiment::{
    emotion_profile, sentiment, sentiment_similarity, EmotionLexicon, EmotionProfile, SentimentLexicon,
    SentimentVector, EMOTIONS,
};
pub use syntax::{syntax_features, syntax_overlap, text_syntax_similarity, Grammar, Parse, SyntaxOverlap};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference text is empty")]
    EmptyReference,
    #[error("text has no tokens")]
    EmptyText,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("grammar line {line}: {message}")]
    Grammar { line: usize, message: String },
    #[error("predictor has no model for tag {0:?}")]
    MissingTag(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, MetricsError> {
    std::fs::read_to_string(path)
        .map_err(|e| MetricsError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
