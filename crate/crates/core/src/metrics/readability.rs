//! Gunning Fog readability index.
//!
//! Fog = 0.4 * (words / sentences + 100 * complex / words), where a complex
//! word has three or more syllables. Syllables are counted as vowel groups
//! (`y` counts as a vowel), less one for a silent final `e`, minimum one.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::{sentences, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FogBreakdown {
    pub words: usize,
    pub sentences: usize,
    pub complex_words: usize,
    pub index: f64,
}

pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    if w.is_empty() {
        return 1;
    }
    let vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut count = 0;
    let mut prev = false;
    for &c in &w {
        let v = vowel(c);
        if v && !prev {
            count += 1;
        }
        prev = v;
    }
    let n = w.len();
    let silent_e = n > 2 && w[n - 1] == 'e' && !vowel(w[n - 2]) && !(w[n - 2] == 'l' && !vowel(w[n - 3]));
    if silent_e && count > 1 {
        count -= 1;
    }
    count.max(1)
}

pub fn gunning_fog(text: &str) -> Result<FogBreakdown, MetricsError> {
    let words = tokenize(text);
    let sents = sentences(text);
    if words.is_empty() || sents.is_empty() {
        return Err(MetricsError::EmptyText);
    }
    let complex = words.iter().filter(|w| syllables(w) >= 3).count();
    let (nw, ns) = (words.len() as f64, sents.len() as f64);
    Ok(FogBreakdown {
        words: words.len(),
        sentences: sents.len(),
        complex_words: complex,
        index: 0.4 * (nw / ns + 100.0 * complex as f64 / nw),
    })
}

/// 1 / (1 + |fog(a) - fog(b)|); texts without a fog index score 0.
pub fn fog_similarity(a: &str, b: &str) -> f64 {
    match (gunning_fog(a), gunning_fog(b)) {
        (Ok(x), Ok(y)) => 1.0 / (1.0 + (x.index - y.index).abs()),
        _ => 0.0,
    }
}
