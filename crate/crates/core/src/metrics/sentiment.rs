//! Lexicon-based sentiment and emotion scoring.
//!
//! Sentiment lexicon: tab-separated `word polarity subjectivity`, polarity in
//! [-1, 1] and subjectivity in [0, 1]. Emotion lexicon: tab-separated `word
//! emotions` with a comma-separated list drawn from [`EMOTIONS`]. Lines
//! starting with `#` are comments.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, MetricsError};
use crate::text::tokenize;

pub const EMOTIONS: [&str; 8] = ["anger", "anticipation", "disgust", "fear", "joy", "sadness", "surprise", "trust"];

const NEGATORS: [&str; 4] = ["not", "never", "no", "t"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentVector {
    pub polarity: f64,
    pub subjectivity: f64,
    /// Lexicon words found in the text.
    pub hits: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    entries: HashMap<String, (f64, f64)>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split('\t').map(str::trim).collect()))
        }
    })
}

impl SentimentLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(crate::defaults::SENTIMENT_LEXICON).expect("bundled sentiment lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        Self::from_tsv(&read_file(path)?)
    }

    pub fn from_tsv(text: &str) -> Result<Self, MetricsError> {
        let mut entries = HashMap::new();
        for (line, fields) in data_lines(text) {
            let err = |message: String| MetricsError::Lexicon { line, message };
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let p: f64 = fields[1].parse().map_err(|_| err(format!("bad polarity {:?}", fields[1])))?;
            let s: f64 = fields[2].parse().map_err(|_| err(format!("bad subjectivity {:?}", fields[2])))?;
            if !(-1.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&s) {
                return Err(err("score out of range".into()));
            }
            entries.insert(fields[0].to_lowercase(), (p, s));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Mean polarity and subjectivity over lexicon hits. A hit directly after a
/// negator (`not`, `never`, `no`, `n't`) has its polarity scaled by -0.5.
/// No hits gives (0, 0).
pub fn sentiment(text: &str, lexicon: &SentimentLexicon) -> SentimentVector {
    let tokens = tokenize(text);
    let (mut pol, mut subj, mut hits) = (0.0, 0.0, 0);
    for (i, t) in tokens.iter().enumerate() {
        if let Some(&(p, s)) = lexicon.entries.get(t) {
            let negated = i > 0 && NEGATORS.contains(&tokens[i - 1].as_str());
            pol += if negated { -0.5 * p } else { p };
            subj += s;
            hits += 1;
        }
    }
    if hits == 0 {
        return SentimentVector { polarity: 0.0, subjectivity: 0.0, hits };
    }
    let n = hits as f64;
    SentimentVector { polarity: (pol / n).clamp(-1.0, 1.0), subjectivity: (subj / n).clamp(0.0, 1.0), hits }
}

/// Cosine between (polarity, subjectivity) vectors, clamped to [0, 1]. Two
/// zero vectors are identical (1); a zero and a non-zero vector share nothing (0).
pub fn sentiment_similarity(a: &SentimentVector, b: &SentimentVector) -> f64 {
    let na = (a.polarity * a.polarity + a.subjectivity * a.subjectivity).sqrt();
    let nb = (b.polarity * b.polarity + b.subjectivity * b.subjectivity).sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => ((a.polarity * b.polarity + a.subjectivity * b.subjectivity) / (na * nb)).clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmotionLexicon {
    entries: HashMap<String, Vec<usize>>,
}

impl EmotionLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(crate::defaults::EMOTION_LEXICON).expect("bundled emotion lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        Self::from_tsv(&read_file(path)?)
    }

    pub fn from_tsv(text: &str) -> Result<Self, MetricsError> {
        let mut entries = HashMap::new();
        for (line, fields) in data_lines(text) {
            let err = |message: String| MetricsError::Lexicon { line, message };
            if fields.len() != 2 {
                return Err(err(format!("expected 2 fields, found {}", fields.len())));
            }
            let mut idx = Vec::new();
            for e in fields[1].split(',').map(str::trim).filter(|e| !e.is_empty()) {
                let i = EMOTIONS
                    .iter()
                    .position(|x| *x == e.to_lowercase())
                    .ok_or_else(|| err(format!("unknown emotion {e:?}")))?;
                idx.push(i);
            }
            entries.insert(fields[0].to_lowercase(), idx);
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionProfile {
    /// Share of emotion hits per emotion; sums to 1 unless `all_zero`.
    pub scores: BTreeMap<String, f64>,
    /// Highest-scoring emotion (first in [`EMOTIONS`] order on ties).
    pub dominant: Option<String>,
    pub all_zero: bool,
}

pub fn emotion_profile(text: &str, lexicon: &EmotionLexicon) -> EmotionProfile {
    let mut counts = [0usize; 8];
    for t in tokenize(text) {
        if let Some(idx) = lexicon.entries.get(&t) {
            for &i in idx {
                counts[i] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let scores = EMOTIONS
        .iter()
        .zip(counts)
        .map(|(e, c)| (e.to_string(), if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    let dominant = (total > 0).then(|| {
        let mut best = 0;
        for i in 1..8 {
            if counts[i] > counts[best] {
                best = i;
            }
        }
        EMOTIONS[best].to_string()
    });
    EmotionProfile { scores, dominant, all_zero: total == 0 }
}
