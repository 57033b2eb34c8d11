//! Backend clients that run locally: a scripted mock and a prompt-aware
//! rule-based caller.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::BackendProfile;
use super::prompt::PromptBundle;
use super::GenerationError;
use crate::corpus::{Speaker, Turn};
use crate::text::{content_tokens, sentences};

/// Address used when a caller has no real address to give. It is absent from
/// the bundled fixtures' gazetteer and must be caught by the factual check.
pub const FABRICATED_ADDRESS: &str = "742 Evergreen Terrace";

pub struct CompletionRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub history: &'a [Turn],
    pub profile: &'a BackendProfile,
    /// 1-based attempt within the validation loop.
    pub attempt: u32,
    pub seed: u64,
    pub call_index: u64,
}

pub trait BackendClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GenerationError>;
}

/// Seed for one (session seed, caller turn, attempt) cell.
pub(crate) fn stream_seed(seed: u64, call_index: u64, attempt: u32) -> u64 {
    let mut z =
        seed ^ call_index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (attempt as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    /// Output per attempt; attempts past the end repeat the last one.
    Attempts {
        attempts: Vec<String>,
    },
    /// Seeded choice among outputs, drawn afresh for every attempt.
    Choices {
        choices: Vec<String>,
    },
}

/// Replays a fixed script. Entry `i` answers caller turn `i`; turns past
/// the end of the script reuse the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, GenerationError> {
        if entries.is_empty() {
            return Err(GenerationError::Script("script has no entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            let empty = match e {
                ScriptEntry::Text(_) => false,
                ScriptEntry::Attempts { attempts } => attempts.is_empty(),
                ScriptEntry::Choices { choices } => choices.is_empty(),
            };
            if empty {
                return Err(GenerationError::Script(format!("entry {i} has no outputs")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Result<Self, GenerationError> {
        Self::new(texts.into_iter().map(|t| ScriptEntry::Text(t.into())).collect())
    }

    /// A JSON array of entries: strings, `{"attempts": [...]}` or `{"choices": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, GenerationError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| GenerationError::Script(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, GenerationError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GenerationError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn output(&self, seed: u64, call_index: u64, attempt: u32) -> &str {
        let i = (call_index as usize).min(self.entries.len() - 1);
        match &self.entries[i] {
            ScriptEntry::Text(t) => t,
            ScriptEntry::Attempts { attempts } => {
                let a = (attempt.max(1) as usize - 1).min(attempts.len() - 1);
                &attempts[a]
            }
            ScriptEntry::Choices { choices } => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, call_index, attempt));
                &choices[rng.random_range(0..choices.len())]
            }
        }
    }
}

impl BackendClient for ScriptedBackend {
    fn complete(&self, r: &CompletionRequest<'_>) -> Result<String, GenerationError> {
        Ok(self.output(r.seed, r.call_index, r.attempt).to_string())
    }
}

/// Deterministic caller that answers from whatever the prompt bundle gives
/// it: the incident from the task explanation, addresses from the fact
/// context and free answers from retrieved excerpts and exemplars.
///
/// With probability `fault_rate` per (seed, caller turn, attempt) the
/// response is corrupted in a way the checks can detect: address answers
/// switch to [`FABRICATED_ADDRESS`], other answers gain a role prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBasedBackend {
    pub fault_rate: f64,
}

impl RuleBasedBackend {
    pub fn new(fault_rate: f64) -> Self {
        Self { fault_rate: fault_rate.clamp(0.0, 1.0) }
    }
}

impl Default for RuleBasedBackend {
    fn default() -> Self {
        Self::new(0.0)
    }
}

fn is_address_question(q: &str) -> bool {
    let tokens: BTreeSet<String> = crate::text::tokenize(q).into_iter().collect();
    ["address", "where", "location", "located"].iter().any(|w| tokens.contains(*w))
}

fn sentence_pool(bundle: &PromptBundle) -> Vec<String> {
    let mut pool = Vec::new();
    let texts = bundle
        .fact_context
        .iter()
        .flat_map(|f| f.excerpts.iter().map(|e| e.text.as_str()))
        .chain(bundle.few_shot.iter().flat_map(|f| f.exemplars.iter().map(|e| e.text.as_str())));
    for t in texts {
        for s in sentences(t) {
            if !s.chars().any(|c| c.is_ascii_digit()) && !pool.contains(&s) {
                pool.push(s);
            }
        }
    }
    pool
}

/// Pool sentence sharing the most content words with `query`; `None` when
/// nothing overlaps. Ties go to the earlier sentence.
fn best_sentence<'p>(pool: &'p [String], query: &str, used: &BTreeSet<&str>) -> Option<&'p str> {
    let q: BTreeSet<String> = content_tokens(query).into_iter().collect();
    let mut best: Option<(&str, usize)> = None;
    for s in pool {
        if used.contains(s.as_str()) {
            continue;
        }
        let overlap = content_tokens(s).into_iter().collect::<BTreeSet<_>>().intersection(&q).count();
        if overlap > 0 && best.is_none_or(|(_, o)| overlap > o) {
            best = Some((s, overlap));
        }
    }
    best.map(|(s, _)| s)
}

fn filler(profile: &BackendProfile) -> &'static str {
    match profile.key.as_ref().map(|k| k.emotion.as_str()) {
        Some("anxious") => "Please hurry, I don't know what to do.",
        Some("angry") => "I already told you, just send someone!",
        Some("sad") => "I'm sorry, I just... please help.",
        Some("calm") => "Yes, that's right.",
        Some("irrational") => "You have to listen to me, they're everywhere!",
        _ => "I'm not sure. Please send someone.",
    }
}

fn with_period(s: &str) -> String {
    let s = s.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

impl BackendClient for RuleBasedBackend {
    fn complete(&self, r: &CompletionRequest<'_>) -> Result<String, GenerationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(r.seed, r.call_index, r.attempt));
        let fault = rng.random::<f64>() < self.fault_rate;
        let bundle = r.bundle;
        let pool = sentence_pool(bundle);
        let used: BTreeSet<&str> = r
            .history
            .iter()
            .filter(|t| t.speaker == Speaker::Caller)
            .flat_map(|t| sentences(&t.text))
            .filter_map(|s| pool.iter().find(|p| **p == s).map(String::as_str))
            .collect();
        let question = r.history.iter().rev().find(|t| t.speaker == Speaker::Calltaker).map(|t| t.text.as_str());

        let address = bundle.fact_context.as_ref().filter(|f| !f.addresses.is_empty()).map(|f| f.addresses[0].as_str());

        let (text, has_address) = match question {
            None => {
                let mut out = match &bundle.task_explanation {
                    Some(t) => {
                        let mut s = format!("Hello, I need to report a {}.", t.incident_type);
                        let extra: Vec<&str> =
                            t.scenario_contexts.iter().chain(&t.special_requests).map(|l| l.as_str()).collect();
                        if !extra.is_empty() {
                            s.push_str(&format!(" There's {} too.", extra.join(" and ")));
                        }
                        if let Some(ex) = best_sentence(&pool, t.incident_type.as_str(), &used) {
                            s.push(' ');
                            s.push_str(&with_period(ex));
                        }
                        s
                    }
                    None => match pool.first() {
                        Some(ex) => format!("Hello, I need help. {}", with_period(ex)),
                        None => "Hello, I need help.".to_string(),
                    },
                };
                if bundle
                    .task_explanation
                    .as_ref()
                    .is_some_and(|t| t.behaviour.iter().any(|b| b.contains("limited English")))
                {
                    out.push_str(" Sorry, my English is not good.");
                }
                (out, false)
            }
            Some(q) if is_address_question(q) => {
                let addr = if fault { FABRICATED_ADDRESS } else { address.unwrap_or(FABRICATED_ADDRESS) };
                (format!("It's {addr}."), true)
            }
            Some(q) => {
                let text = match best_sentence(&pool, q, &used) {
                    Some(s) => with_period(s),
                    None => filler(r.profile).to_string(),
                };
                (text, false)
            }
        };
        if fault && !has_address {
            return Ok(format!("Caller: {text}"));
        }
        Ok(text)
    }
}
