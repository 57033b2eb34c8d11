//! Equity scores: margin between tag groups and per-tag accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexical::multiset_jaccard;
use super::sentiment::{sentiment, sentiment_similarity, EmotionProfile, SentimentLexicon, SentimentVector};
use super::syntax::{syntax_features, Grammar};
use super::MetricsError;
use crate::corpus::{Label, LabelSet};
use crate::text::{content_tokens, cosine, normalize, tokenize, SparseVector, TfIdfIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginResult {
    pub sim_a: f64,
    pub sim_not_a: f64,
    pub margin: f64,
    /// Both similarities were zero; the margin is reported as 0.
    pub degenerate: bool,
}

/// (a - b) / (a + b), or 0 flagged degenerate when both are zero.
pub fn margin_from_similarities(sim_a: f64, sim_not_a: f64) -> MarginResult {
    let sum = sim_a + sim_not_a;
    if sum == 0.0 {
        return MarginResult { sim_a, sim_not_a, margin: 0.0, degenerate: true };
    }
    MarginResult { sim_a, sim_not_a, margin: ((sim_a - sim_not_a) / sum).clamp(-1.0, 1.0), degenerate: false }
}

/// Mean of `f` over every (x, y) pair.
pub fn pairwise_mean<X, Y>(xs: &[X], ys: &[Y], f: impl Fn(&X, &Y) -> f64) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for x in xs {
        for y in ys {
            total += f(x, y);
        }
    }
    total / (xs.len() * ys.len()) as f64
}

fn check_sets<S>(outputs: &[S], refs_a: &[S], refs_not_a: &[S]) -> Result<(), MetricsError> {
    if outputs.is_empty() {
        return Err(MetricsError::EmptySet("outputs"));
    }
    if refs_a.is_empty() {
        return Err(MetricsError::EmptySet("tag references"));
    }
    if refs_not_a.is_empty() {
        return Err(MetricsError::EmptySet("complement references"));
    }
    Ok(())
}

/// Margin with an arbitrary pairwise similarity in [0, 1].
pub fn margin_with<S: AsRef<str>>(
    outputs: &[S],
    refs_a: &[S],
    refs_not_a: &[S],
    sim: impl Fn(&str, &str) -> f64,
) -> Result<MarginResult, MetricsError> {
    check_sets(outputs, refs_a, refs_not_a)?;
    let a = pairwise_mean(outputs, refs_a, |o, r| sim(o.as_ref(), r.as_ref()));
    let b = pairwise_mean(outputs, refs_not_a, |o, r| sim(o.as_ref(), r.as_ref()));
    Ok(margin_from_similarities(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub syntax: f64,
    pub lexical: f64,
    pub sentiment: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self { syntax: 1.0, lexical: 1.0, sentiment: 1.0 }
    }
}

/// Per-text inputs of the combined similarity, computed once per text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    pub syntax: BTreeMap<String, usize>,
    pub tokens: Vec<String>,
    pub sentiment: SentimentVector,
}

/// Similarity(X) as a weighted mean of syntactic overlap, TF-iDF cosine and
/// sentiment-vector cosine. Weights are normalised to sum to one.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    pub grammar: Grammar,
    pub lexicon: SentimentLexicon,
    pub weights: SimilarityWeights,
}

impl SimilarityModel {
    pub fn bundled() -> Self {
        Self {
            grammar: Grammar::bundled(),
            lexicon: SentimentLexicon::bundled(),
            weights: SimilarityWeights::default(),
        }
    }

    pub fn features(&self, text: &str) -> TextFeatures {
        TextFeatures {
            syntax: syntax_features(text, &self.grammar),
            tokens: tokenize(text),
            sentiment: sentiment(text, &self.lexicon),
        }
    }

    pub fn pair(&self, a: &TextFeatures, b: &TextFeatures, index: &TfIdfIndex) -> f64 {
        let w = self.weights;
        let total = w.syntax + w.lexical + w.sentiment;
        if total <= 0.0 {
            return 0.0;
        }
        let s = multiset_jaccard(&a.syntax, &b.syntax);
        let l = index.cosine(&a.tokens, &b.tokens);
        let e = sentiment_similarity(&a.sentiment, &b.sentiment);
        ((w.syntax * s + w.lexical * l + w.sentiment * e) / total).clamp(0.0, 1.0)
    }
}

/// Margin of generated `outputs` between references carrying a tag and
/// references without it. The TF-iDF index spans all three sets, so
/// swapping the reference sets negates the margin exactly.
pub fn margin_score<S: AsRef<str>>(
    outputs: &[S],
    refs_a: &[S],
    refs_not_a: &[S],
    model: &SimilarityModel,
) -> Result<MarginResult, MetricsError> {
    check_sets(outputs, refs_a, refs_not_a)?;
    let feats = |xs: &[S]| xs.iter().map(|x| model.features(x.as_ref())).collect::<Vec<_>>();
    let (fo, fa, fn_) = (feats(outputs), feats(refs_a), feats(refs_not_a));
    let index = TfIdfIndex::new(fo.iter().chain(&fa).chain(&fn_).map(|f| f.tokens.as_slice()));
    let a = pairwise_mean(&fo, &fa, |x, y| model.pair(x, y, &index));
    let b = pairwise_mean(&fo, &fn_, |x, y| model.pair(x, y, &index));
    Ok(margin_from_similarities(a, b))
}

/// Binary per-tag classifier over generated text.
pub trait TagPredictor {
    /// Whether `text` carries `tag`; [`MetricsError::MissingTag`] if the
    /// predictor has no model for it.
    fn predict(&self, text: &str, tag: &Label) -> Result<bool, MetricsError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCall {
    pub text: String,
    pub truth: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAccuracyResult {
    pub tags: Vec<Label>,
    /// `predictions[i][j]`: predictor's decision for call i, tag j.
    pub predictions: Vec<Vec<bool>>,
    pub per_call: Vec<f64>,
    pub overall: f64,
}

/// Acc(x_i) = (1/k) Σ_j 1[C_j(x_i) = 1[t_j ∈ truth(x_i)]]; overall is the mean over calls.
pub fn tag_accuracy(
    calls: &[TagCall],
    tags: &[Label],
    predictor: &dyn TagPredictor,
) -> Result<TagAccuracyResult, MetricsError> {
    if calls.is_empty() {
        return Err(MetricsError::EmptySet("calls"));
    }
    if tags.is_empty() {
        return Err(MetricsError::EmptySet("tags"));
    }
    let mut predictions = Vec::with_capacity(calls.len());
    let mut per_call = Vec::with_capacity(calls.len());
    for call in calls {
        let mut row = Vec::with_capacity(tags.len());
        let mut right = 0;
        for tag in tags {
            let p = predictor.predict(&call.text, tag)?;
            if p == call.truth.contains(tag) {
                right += 1;
            }
            row.push(p);
        }
        per_call.push(right as f64 / tags.len() as f64);
        predictions.push(row);
    }
    let overall = per_call.iter().sum::<f64>() / per_call.len() as f64;
    Ok(TagAccuracyResult { tags: tags.to_vec(), predictions, per_call, overall })
}

/// Nearest-centroid tag predictor: a text carries a tag when it is closer
/// to the centroid of references with the tag than to those without it.
#[derive(Debug, Clone)]
pub struct CentroidTagPredictor {
    index: TfIdfIndex,
    centroids: BTreeMap<Label, (SparseVector, SparseVector)>,
}

impl CentroidTagPredictor {
    /// Tags lacking either positive or negative references get no model.
    pub fn train(references: &[TagCall], tags: &[Label]) -> Self {
        let docs: Vec<Vec<String>> = references.iter().map(|r| content_tokens(&r.text)).collect();
        let index = TfIdfIndex::new(&docs);
        let vectors: Vec<SparseVector> = docs
            .iter()
            .map(|d| {
                let mut v = index.vector(d);
                normalize(&mut v);
                v
            })
            .collect();
        let mut centroids = BTreeMap::new();
        for tag in tags {
            let mut pos = SparseVector::new();
            let mut neg = SparseVector::new();
            let (mut np, mut nn) = (0, 0);
            for (r, v) in references.iter().zip(&vectors) {
                let target = if r.truth.contains(tag) {
                    np += 1;
                    &mut pos
                } else {
                    nn += 1;
                    &mut neg
                };
                for (t, w) in v {
                    *target.entry(t.clone()).or_default() += w;
                }
            }
            if np > 0 && nn > 0 {
                normalize(&mut pos);
                normalize(&mut neg);
                centroids.insert(tag.clone(), (pos, neg));
            }
        }
        Self { index, centroids }
    }

    pub fn supported_tags(&self) -> impl Iterator<Item = &Label> {
        self.centroids.keys()
    }
}

impl TagPredictor for CentroidTagPredictor {
    fn predict(&self, text: &str, tag: &Label) -> Result<bool, MetricsError> {
        let (pos, neg) = self.centroids.get(tag).ok_or_else(|| MetricsError::MissingTag(tag.to_string()))?;
        let v = self.index.vector(&content_tokens(text));
        Ok(cosine(&v, pos) > cosine(&v, neg))
    }
}

/// Lexicon emotions accepted as evidence of each caller-image emotion tag.
/// `neutral` is matched by the absence of emotion words.
const EMOTION_EVIDENCE: [(&str, &[&str]); 6] = [
    ("sad", &["sadness"]),
    ("angry", &["anger", "disgust"]),
    ("anxious", &["fear", "anticipation"]),
    ("calm", &["trust", "joy"]),
    ("irrational", &["surprise", "fear", "anger"]),
    ("neutral", &[]),
];

/// Whether an emotion profile agrees with a caller-image emotion tag.
pub fn emotion_matches(tag: &Label, profile: &EmotionProfile) -> bool {
    let Some((_, evidence)) = EMOTION_EVIDENCE.iter().find(|(t, _)| *t == tag.as_str()) else {
        return false;
    };
    match &profile.dominant {
        None => evidence.is_empty(),
        Some(d) => evidence.contains(&d.as_str()),
    }
}
