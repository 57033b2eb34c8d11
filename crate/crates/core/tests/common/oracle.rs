//! Independent reference implementations and random-case generators shared
//! by the property tests and the acceptance run.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use callsim::corpus::{parse_corpus_str, Label, LabelSet, TagTaxonomy};
use callsim::knowledge::RetrievableBase;
use callsim::metrics::{cross_entropy, margin_score, perplexity, train_lm, SimilarityModel};
use callsim::text::content_tokens;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use serde_json::json;

/// Bigram model with additive smoothing, `<s>` padding and an `<unk>`
/// vocabulary entry.
pub struct BigramOracle {
    vocab: BTreeSet<String>,
    pair: HashMap<(String, String), f64>,
    ctx: HashMap<String, f64>,
    alpha: f64,
}

impl BigramOracle {
    pub fn new(docs: &[Vec<String>], alpha: f64) -> Self {
        let mut vocab: BTreeSet<String> = docs.iter().flatten().cloned().collect();
        vocab.insert("<unk>".into());
        let mut pair = HashMap::new();
        let mut ctx = HashMap::new();
        for d in docs {
            let mut prev = "<s>".to_string();
            for w in d {
                *pair.entry((prev.clone(), w.clone())).or_insert(0.0) += 1.0;
                *ctx.entry(prev.clone()).or_insert(0.0) += 1.0;
                prev = w.clone();
            }
        }
        Self { vocab, pair, ctx, alpha }
    }

    fn map(&self, w: &str) -> String {
        if self.vocab.contains(w) {
            w.to_string()
        } else {
            "<unk>".into()
        }
    }

    pub fn cross_entropy(&self, tokens: &[String]) -> f64 {
        let v = self.vocab.len() as f64;
        let mut prev = "<s>".to_string();
        let mut total = 0.0;
        for w in tokens {
            let w = self.map(w);
            let c = self.pair.get(&(prev.clone(), w.clone())).copied().unwrap_or(0.0);
            let n = self.ctx.get(&prev).copied().unwrap_or(0.0);
            total += ((c + self.alpha) / (n + self.alpha * v)).ln();
            prev = w;
        }
        -total / tokens.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct LmCase {
    pub docs: Vec<Vec<String>>,
    pub text: Vec<String>,
    pub alpha: f64,
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 1..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

pub fn lm_case() -> impl Strategy<Value = LmCase> {
    (
        prop::collection::vec(sentence(), 1..6),
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "x", "y"]), 1..15),
        0.01f64..2.0,
    )
        .prop_map(|(docs, text, alpha)| LmCase { docs, text: text.into_iter().map(String::from).collect(), alpha })
}

/// PPL of the library bigram model equals exp of the oracle cross-entropy.
pub fn check_lm_case(case: &LmCase) -> Result<(), TestCaseError> {
    let texts: Vec<String> = case.docs.iter().map(|d| d.join(" ")).collect();
    let lm = train_lm(&texts, 2, case.alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let joined = case.text.join(" ");
    let oracle = BigramOracle::new(&case.docs, case.alpha).cross_entropy(&case.text);
    let h = cross_entropy(&lm, &joined).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let ppl = perplexity(&lm, &joined).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((h - oracle).abs() <= 1e-9, "cross-entropy {h} vs {oracle}");
    prop_assert!((ppl - oracle.exp()).abs() <= 1e-9 * oracle.exp().max(1.0), "ppl {ppl} vs {}", oracle.exp());
    Ok(())
}

/// Ranking by TF = count / length, iDF = ln(N / df) and cosine, computed
/// without the library's index. Ties go to the smaller id.
pub fn oracle_ranking(docs: &[(String, LabelSet, String)], tags: &LabelSet, query: &str) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| content_tokens(&d.2)).collect();
    let n = docs.len() as f64;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &toks {
        let uniq: BTreeSet<&str> = t.iter().map(String::as_str).collect();
        for w in uniq {
            *df.entry(w).or_default() += 1.0;
        }
    }
    let weigh = |t: &[String]| -> BTreeMap<String, f64> {
        let mut v = BTreeMap::new();
        for w in t {
            if let Some(d) = df.get(w.as_str()) {
                *v.entry(w.clone()).or_insert(0.0) += (n / d).ln() / t.len() as f64;
            }
        }
        v
    };
    let cos = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| {
        let dot: f64 = a.iter().map(|(k, x)| x * b.get(k).unwrap_or(&0.0)).sum();
        let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let q = weigh(&content_tokens(query));
    let mut out: Vec<(String, f64)> = docs
        .iter()
        .zip(&toks)
        .filter(|(d, _)| tags.is_subset(&d.1))
        .map(|(d, t)| (d.0.clone(), cos(&q, &weigh(t))))
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

const WORDS: &[&str] = &[
    "car", "crash", "smoke", "fire", "window", "broken", "rain", "bridge", "bleeding", "door", "kitchen", "alarm",
    "truck", "road", "the", "a", "is", "help", "please", "man", "woman", "dog", "gun", "storm",
];
const TYPES: &[&str] = &["fire", "crash report", "burglary"];
const CONTEXTS: &[&str] = &["severe weather", "highway", "night time"];
const EMOTIONS: &[&str] = &["calm", "anxious", "angry"];
const VULNERABLE: &[&str] = &["unhoused", "non-native speaker", "mental health"];

#[derive(Debug, Clone)]
pub struct Doc {
    text: Vec<usize>,
    ty: usize,
    contexts: Vec<usize>,
    emotion: usize,
    vulnerable: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RetrievalCase {
    pub docs: Vec<Doc>,
    pub tags: LabelSet,
    pub query: String,
    pub k: usize,
}

fn doc() -> impl Strategy<Value = Doc> {
    (
        prop::collection::vec(0..WORDS.len(), 1..12),
        0..TYPES.len(),
        prop::collection::vec(0..CONTEXTS.len(), 0..3),
        0..EMOTIONS.len(),
        prop::collection::vec(0..VULNERABLE.len(), 0..3),
    )
        .prop_map(|(text, ty, contexts, emotion, vulnerable)| Doc { text, ty, contexts, emotion, vulnerable })
}

/// Corpora of 1 to 49 calls, a tag set of up to two labels and a query.
pub fn retrieval_case() -> impl Strategy<Value = RetrievalCase> {
    let all: Vec<&'static str> = TYPES.iter().chain(CONTEXTS).chain(EMOTIONS).chain(VULNERABLE).copied().collect();
    (
        prop::collection::vec(doc(), 1..50),
        prop::sample::subsequence(all, 0..3),
        prop::collection::vec(0..WORDS.len(), 0..6),
        1usize..60,
    )
        .prop_map(|(docs, tags, query, k)| RetrievalCase {
            docs,
            tags: tags.iter().map(|t| Label::new(t)).collect(),
            query: query.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" "),
            k,
        })
}

/// Every hit carries the requested tags and the ranking agrees with
/// [`oracle_ranking`] (scores to 1e-9; order may differ only among equal scores).
pub fn check_retrieval_case(case: &RetrievalCase) -> Result<(), TestCaseError> {
    let taxonomy = TagTaxonomy::bundled();
    let lines: Vec<String> = case
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let text: Vec<&str> = d.text.iter().map(|&w| WORDS[w]).collect();
            json!({
                "id": format!("c{i:02}"),
                "turns": [{"speaker": "caller", "text": text.join(" ")}],
                "is": {
                    "incident_type": TYPES[d.ty],
                    "scenario_contexts": d.contexts.iter().map(|&c| CONTEXTS[c]).collect::<BTreeSet<_>>(),
                },
                "ci": {
                    "age": "adult",
                    "emotion": EMOTIONS[d.emotion],
                    "vulnerable": d.vulnerable.iter().map(|&v| VULNERABLE[v]).collect::<BTreeSet<_>>(),
                },
            })
            .to_string()
        })
        .collect();
    let corpus = parse_corpus_str(&lines.join("\n"), &taxonomy).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let base = RetrievableBase::build(&corpus, &taxonomy).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let hits = base.retrieve(&case.tags, &case.query, case.k).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for h in &hits {
        prop_assert!(case.tags.is_subset(&h.entry.labels), "{} lacks a requested tag", h.entry.call_id);
    }

    let docs: Vec<(String, LabelSet, String)> =
        base.entries().iter().map(|e| (e.call_id.clone(), e.labels.clone(), e.text.clone())).collect();
    let oracle = oracle_ranking(&docs, &case.tags, &case.query);
    prop_assert_eq!(hits.len(), oracle.len().min(case.k));
    for (h, (id, score)) in hits.iter().zip(&oracle) {
        prop_assert!((h.score - score).abs() < 1e-9, "{} vs {}", h.score, score);
        if h.entry.call_id != *id {
            let mine = oracle.iter().find(|(i, _)| *i == h.entry.call_id).unwrap().1;
            prop_assert!((mine - score).abs() < 1e-9, "{} ranked out of order", h.entry.call_id);
        }
    }
    Ok(())
}

fn caller_text() -> impl Strategy<Value = String> {
    let words = vec![
        "the", "car", "hit", "a", "pole", "please", "hurry", "I", "am", "scared", "smoke", "fire", "my", "friend",
        "is", "hurt", "bad", "good", "rain", "road", "sat", "saw", "help",
    ];
    prop::collection::vec(prop::sample::select(words), 1..10).prop_map(|w| format!("{}.", w.join(" ")))
}

#[derive(Debug, Clone)]
pub struct MarginCase {
    pub outputs: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

pub fn margin_case() -> impl Strategy<Value = MarginCase> {
    (
        prop::collection::vec(caller_text(), 1..4),
        prop::collection::vec(caller_text(), 1..4),
        prop::collection::vec(caller_text(), 1..4),
    )
        .prop_map(|(outputs, a, b)| MarginCase { outputs, a, b })
}

/// Swapping the tag and complement reference sets negates the margin.
pub fn check_margin_case(case: &MarginCase, model: &SimilarityModel) -> Result<(), TestCaseError> {
    let m = margin_score(&case.outputs, &case.a, &case.b, model).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let s = margin_score(&case.outputs, &case.b, &case.a, model).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((m.margin + s.margin).abs() <= 1e-12, "{} vs {}", m.margin, s.margin);
    prop_assert!((-1.0..=1.0).contains(&m.margin));
    prop_assert!((0.0..=1.0).contains(&m.sim_a) && (0.0..=1.0).contains(&m.sim_not_a));
    Ok(())
}
