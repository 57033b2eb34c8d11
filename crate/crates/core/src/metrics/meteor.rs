//! METEOR with exact and stemmed matching stages.
//!
//! P = m/|c|, R = m/|r|, F = 10PR / (R + 9P), penalty = 0.5 * chunks/m
//! (capped at 1), score = F * (1 - penalty). There is no cube on the
//! fragmentation ratio and no synonym stage.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteorBreakdown {
    pub m: usize,
    pub c_len: usize,
    pub r_len: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_mean: f64,
    pub chunks: usize,
    pub p_frag: f64,
    pub score: f64,
    /// Matched (candidate position, reference position) pairs, by candidate position.
    pub alignment: Vec<(usize, usize)>,
}

/// Light suffix stripper: enough to align "crashed"/"crash", "cars"/"car".
pub fn stem(token: &str) -> String {
    let t = token;
    if t.chars().count() <= 3 || !t.is_ascii() {
        return t.to_string();
    }
    if let Some(s) = t.strip_suffix("sses") {
        return format!("{s}ss");
    }
    if let Some(s) = t.strip_suffix("ies") {
        return format!("{s}y");
    }
    for suffix in ["ingly", "edly", "ing", "ed", "ly", "es", "s"] {
        if let Some(s) = t.strip_suffix(suffix) {
            if s.len() >= 3 && !(suffix == "s" && s.ends_with('s')) {
                return s.to_string();
            }
        }
    }
    t.to_string()
}

/// Aligns candidate tokens to reference tokens in one stage. Each unmatched
/// candidate token takes, in order of preference: the reference position right
/// after the previous candidate token's match, the first free position at or
/// after the last match, or the first free position overall.
fn align_stage<F>(cand: &[String], reference: &[String], c_match: &mut [Option<usize>], r_used: &mut [bool], eq: F)
where
    F: Fn(&str, &str) -> bool,
{
    let mut last: Option<usize> = None;
    for i in 0..cand.len() {
        if let Some(j) = c_match[i] {
            last = Some(j);
            continue;
        }
        let free = |j: usize| !r_used[j] && eq(&cand[i], &reference[j]);
        let prev = if i > 0 { c_match[i - 1] } else { None };
        let pick = prev
            .map(|p| p + 1)
            .filter(|&j| j < reference.len() && free(j))
            .or_else(|| last.and_then(|l| (l..reference.len()).find(|&j| free(j))))
            .or_else(|| (0..reference.len()).find(|&j| free(j)));
        if let Some(j) = pick {
            c_match[i] = Some(j);
            r_used[j] = true;
            last = Some(j);
        }
    }
}

pub fn meteor(candidate: &str, reference: &str) -> Result<MeteorBreakdown, MetricsError> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let mut c_match = vec![None; c.len()];
    let mut r_used = vec![false; r.len()];
    align_stage(&c, &r, &mut c_match, &mut r_used, |a, b| a == b);
    align_stage(&c, &r, &mut c_match, &mut r_used, |a, b| stem(a) == stem(b));

    let alignment: Vec<(usize, usize)> = c_match.iter().enumerate().filter_map(|(i, m)| m.map(|j| (i, j))).collect();
    let m = alignment.len();
    let mut chunks = 0;
    for (k, &(i, j)) in alignment.iter().enumerate() {
        let continues = k > 0 && {
            let (pi, pj) = alignment[k - 1];
            pi + 1 == i && pj + 1 == j
        };
        if !continues {
            chunks += 1;
        }
    }
    let (precision, recall, f_mean, p_frag, score) = if m == 0 {
        (0.0, 0.0, 0.0, 0.0, 0.0)
    } else {
        let p = m as f64 / c.len() as f64;
        let rc = m as f64 / r.len() as f64;
        let f = 10.0 * p * rc / (rc + 9.0 * p);
        let frag = (0.5 * chunks as f64 / m as f64).min(1.0);
        (p, rc, f, frag, f * (1.0 - frag))
    };
    Ok(MeteorBreakdown {
        m,
        c_len: c.len(),
        r_len: r.len(),
        precision,
        recall,
        f_mean,
        chunks,
        p_frag,
        score,
        alignment,
    })
}
