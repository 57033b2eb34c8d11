//! Tag taxonomy and annotated call transcripts.
//!
//! A call is annotated with an incident specification (incident type,
//! scenario contexts, special requests) and a caller image (age, emotion and
//! vulnerable-group tags). Labels are compared case-insensitively after
//! trimming; they are stored lower-cased.
//!
//! Corpus files are line-delimited JSON, one call per line:
//!
//! ```json
//! {"id":"c1","turns":[{"speaker":"calltaker","text":"9-1-1, what's the address?"},
//!   {"speaker":"caller","text":"A 322 Broadway."}],
//!  "is":{"incident_type":"crash report","scenario_contexts":["severe weather"],"special_requests":[]},
//!  "ci":{"age":"adult","emotion":"anxious","vulnerable":["unhoused"]}}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy parse error: {0}")]
    TaxonomyParse(String),
    #[error("label {label:?} appears in both {first} and {second}")]
    DuplicateLabel { label: String, first: Family, second: Family },
    #[error("taxonomy is missing required family {0}")]
    MissingFamily(Family),
    #[error("taxonomy is missing required vulnerable-group label {0:?}")]
    MissingVulnerableLabel(String),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("record {record}: unknown tag label {label:?}")]
    UnknownLabel { record: String, label: String },
    #[error("unknown tag label {0:?}")]
    UnknownTag(String),
    #[error("record {record}: label {label:?} is not a {expected} label")]
    WrongFamily { record: String, label: String, expected: Family },
    #[error("record {0}: empty turn list")]
    EmptyTurns(String),
    #[error("record {0}: no caller turn")]
    NoCallerTurn(String),
    #[error("record {record}: turn {index} has empty text")]
    EmptyTurnText { record: String, index: usize },
    #[error("duplicate call id {0:?}")]
    DuplicateId(String),
}

/// A normalised tag label: trimmed and lower-cased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(String);

impl Label {
    pub fn new(raw: &str) -> Self {
        Label(raw.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::new(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(Label::new(&raw))
    }
}

pub type LabelSet = BTreeSet<Label>;

/// The families a label may belong to. Age and emotion together form the
/// general caller-image family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    IncidentType,
    ScenarioContext,
    SpecialRequest,
    Age,
    Emotion,
    Vulnerable,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::IncidentType => "incident_types",
            Family::ScenarioContext => "scenario_contexts",
            Family::SpecialRequest => "special_requests",
            Family::Age => "ci_general.age",
            Family::Emotion => "ci_general.emotion",
            Family::Vulnerable => "ci_vulnerable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    General,
    Sensitive,
}

pub const REQUIRED_VULNERABLE: [&str; 4] =
    ["low-income housing area", "mental health", "non-native speaker", "unhoused"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CiGeneral {
    pub age: LabelSet,
    pub emotion: LabelSet,
}

/// The five label families. Vulnerable-group labels are sensitive; every
/// other label is general.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagTaxonomy {
    pub incident_types: LabelSet,
    #[serde(default)]
    pub scenario_contexts: LabelSet,
    #[serde(default)]
    pub special_requests: LabelSet,
    pub ci_general: CiGeneral,
    pub ci_vulnerable: LabelSet,
    #[serde(skip)]
    family_of: BTreeMap<Label, Family>,
}

#[derive(Deserialize)]
struct RawGeneral {
    age: Option<Vec<String>>,
    emotion: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawTaxonomy {
    incident_types: Option<Vec<String>>,
    #[serde(default)]
    scenario_contexts: Vec<String>,
    #[serde(default)]
    special_requests: Vec<String>,
    ci_general: Option<RawGeneral>,
    ci_vulnerable: Option<Vec<String>>,
}

impl TagTaxonomy {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// The bundled taxonomy.
    pub fn bundled() -> Self {
        Self::from_toml(crate::defaults::TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let raw: RawTaxonomy = toml::from_str(text).map_err(|e| CorpusError::TaxonomyParse(e.to_string()))?;
        let general = raw.ci_general.ok_or(CorpusError::MissingFamily(Family::Age))?;
        let families = [
            (Family::IncidentType, raw.incident_types),
            (Family::ScenarioContext, Some(raw.scenario_contexts)),
            (Family::SpecialRequest, Some(raw.special_requests)),
            (Family::Age, general.age),
            (Family::Emotion, general.emotion),
            (Family::Vulnerable, raw.ci_vulnerable),
        ];

        let mut family_of: BTreeMap<Label, Family> = BTreeMap::new();
        let mut sets: BTreeMap<Family, LabelSet> = BTreeMap::new();
        for (family, labels) in families {
            let labels = labels.ok_or(CorpusError::MissingFamily(family))?;
            let mut set = LabelSet::new();
            for raw_label in labels {
                let label = Label::new(&raw_label);
                if label.as_str().is_empty() {
                    return Err(CorpusError::TaxonomyParse(format!("empty label in {family}")));
                }
                if let Some(&first) = family_of.get(&label) {
                    return Err(CorpusError::DuplicateLabel { label: label.0, first, second: family });
                }
                family_of.insert(label.clone(), family);
                set.insert(label);
            }
            sets.insert(family, set);
        }

        let mut take = |f: Family| sets.remove(&f).unwrap_or_default();
        let taxonomy = TagTaxonomy {
            incident_types: take(Family::IncidentType),
            scenario_contexts: take(Family::ScenarioContext),
            special_requests: take(Family::SpecialRequest),
            ci_general: CiGeneral { age: take(Family::Age), emotion: take(Family::Emotion) },
            ci_vulnerable: take(Family::Vulnerable),
            family_of,
        };
        for (family, set) in [
            (Family::IncidentType, &taxonomy.incident_types),
            (Family::Age, &taxonomy.ci_general.age),
            (Family::Emotion, &taxonomy.ci_general.emotion),
        ] {
            if set.is_empty() {
                return Err(CorpusError::MissingFamily(family));
            }
        }
        for required in REQUIRED_VULNERABLE {
            if !taxonomy.ci_vulnerable.contains(&Label::new(required)) {
                return Err(CorpusError::MissingVulnerableLabel(required.to_string()));
            }
        }
        Ok(taxonomy)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("taxonomy serializes")
    }

    pub fn family(&self, label: &Label) -> Option<Family> {
        self.family_of.get(label).copied()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.family_of.contains_key(label)
    }

    pub fn sensitivity(&self, label: &Label) -> Option<Sensitivity> {
        self.family(label).map(|f| match f {
            Family::Vulnerable => Sensitivity::Sensitive,
            _ => Sensitivity::General,
        })
    }

    pub fn is_sensitive(&self, label: &Label) -> bool {
        self.sensitivity(label) == Some(Sensitivity::Sensitive)
    }

    pub fn sensitive_labels(&self) -> impl Iterator<Item = &Label> {
        self.ci_vulnerable.iter()
    }

    /// Number of caller-image labels (age + emotion + vulnerable).
    pub fn caller_image_label_count(&self) -> usize {
        self.ci_general.age.len() + self.ci_general.emotion.len() + self.ci_vulnerable.len()
    }

    pub fn labels_in(&self, family: Family) -> &LabelSet {
        match family {
            Family::IncidentType => &self.incident_types,
            Family::ScenarioContext => &self.scenario_contexts,
            Family::SpecialRequest => &self.special_requests,
            Family::Age => &self.ci_general.age,
            Family::Emotion => &self.ci_general.emotion,
            Family::Vulnerable => &self.ci_vulnerable,
        }
    }

    /// Resolves every label in `tags`, failing on the first unknown one.
    pub fn resolve_all<'a, I>(&self, tags: I) -> Result<(), CorpusError>
    where
        I: IntoIterator<Item = &'a Label>,
    {
        for t in tags {
            if !self.contains(t) {
                return Err(CorpusError::UnknownTag(t.0.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Caller,
    Calltaker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub index: usize,
}

impl Turn {
    pub fn new(speaker: Speaker, text: impl Into<String>, index: usize) -> Self {
        Self { speaker, text: text.into(), index }
    }

    pub fn caller(text: impl Into<String>, index: usize) -> Self {
        Self::new(Speaker::Caller, text, index)
    }

    pub fn calltaker(text: impl Into<String>, index: usize) -> Self {
        Self::new(Speaker::Calltaker, text, index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentSpecification {
    pub incident_type: Label,
    #[serde(default)]
    pub scenario_contexts: LabelSet,
    #[serde(default)]
    pub special_requests: LabelSet,
}

impl IncidentSpecification {
    pub fn labels(&self) -> LabelSet {
        std::iter::once(self.incident_type.clone())
            .chain(self.scenario_contexts.iter().cloned())
            .chain(self.special_requests.iter().cloned())
            .collect()
    }

    pub fn validate(&self, taxonomy: &TagTaxonomy, record: &str) -> Result<(), CorpusError> {
        check_family(taxonomy, record, &self.incident_type, Family::IncidentType)?;
        for l in &self.scenario_contexts {
            check_family(taxonomy, record, l, Family::ScenarioContext)?;
        }
        for l in &self.special_requests {
            check_family(taxonomy, record, l, Family::SpecialRequest)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallerImage {
    pub age: Label,
    pub emotion: Label,
    #[serde(default)]
    pub vulnerable: LabelSet,
}

impl CallerImage {
    pub fn labels(&self) -> LabelSet {
        [self.age.clone(), self.emotion.clone()].into_iter().chain(self.vulnerable.iter().cloned()).collect()
    }

    pub fn validate(&self, taxonomy: &TagTaxonomy, record: &str) -> Result<(), CorpusError> {
        check_family(taxonomy, record, &self.age, Family::Age)?;
        check_family(taxonomy, record, &self.emotion, Family::Emotion)?;
        for l in &self.vulnerable {
            check_family(taxonomy, record, l, Family::Vulnerable)?;
        }
        Ok(())
    }
}

fn check_family(taxonomy: &TagTaxonomy, record: &str, label: &Label, expected: Family) -> Result<(), CorpusError> {
    match taxonomy.family(label) {
        None => Err(CorpusError::UnknownLabel { record: record.to_string(), label: label.0.clone() }),
        Some(f) if f != expected => {
            Err(CorpusError::WrongFamily { record: record.to_string(), label: label.0.clone(), expected })
        }
        Some(_) => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedCall {
    pub id: String,
    pub turns: Vec<Turn>,
    pub is: IncidentSpecification,
    pub ci: CallerImage,
}

impl AnnotatedCall {
    /// Every IS and CI label attached to the call.
    pub fn labels(&self) -> LabelSet {
        let mut all = self.is.labels();
        all.extend(self.ci.labels());
        all
    }

    pub fn caller_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Caller)
    }

    pub fn full_text(&self) -> String {
        join_turns(&self.turns)
    }

    pub fn caller_text(&self) -> String {
        let parts: Vec<&str> = self.caller_turns().map(|t| t.text.as_str()).collect();
        parts.join(" ")
    }

    /// Checks the structural invariants and tag references, re-indexing turns.
    pub fn validated(mut self, taxonomy: &TagTaxonomy) -> Result<Self, CorpusError> {
        if self.turns.is_empty() {
            return Err(CorpusError::EmptyTurns(self.id));
        }
        for (i, turn) in self.turns.iter_mut().enumerate() {
            if turn.text.trim().is_empty() {
                return Err(CorpusError::EmptyTurnText { record: self.id.clone(), index: i });
            }
            turn.index = i;
        }
        if !self.turns.iter().any(|t| t.speaker == Speaker::Caller) {
            return Err(CorpusError::NoCallerTurn(self.id));
        }
        self.is.validate(taxonomy, &self.id)?;
        self.ci.validate(taxonomy, &self.id)?;
        Ok(self)
    }
}

pub fn join_turns(turns: &[Turn]) -> String {
    let parts: Vec<&str> = turns.iter().map(|t| t.text.as_str()).collect();
    parts.join(" ")
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: Speaker,
    text: String,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    turns: Vec<RawTurn>,
    is: IncidentSpecification,
    ci: CallerImage,
}

pub fn load_taxonomy(path: &Path) -> Result<TagTaxonomy, CorpusError> {
    TagTaxonomy::load(path)
}

pub fn parse_corpus(path: &Path, taxonomy: &TagTaxonomy) -> Result<Vec<AnnotatedCall>, CorpusError> {
    let file =
        std::fs::File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_corpus_reader(BufReader::new(file), taxonomy)
}

/// Parses line-delimited JSON records. Blank lines are skipped.
pub fn parse_corpus_reader<R: BufRead>(reader: R, taxonomy: &TagTaxonomy) -> Result<Vec<AnnotatedCall>, CorpusError> {
    let mut calls = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: "<corpus>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed { line: n + 1, message: e.to_string() })?;
        let call = AnnotatedCall {
            id: raw.id,
            turns: raw.turns.into_iter().enumerate().map(|(i, t)| Turn::new(t.speaker, t.text, i)).collect(),
            is: raw.is,
            ci: raw.ci,
        }
        .validated(taxonomy)?;
        if !seen.insert(call.id.clone()) {
            return Err(CorpusError::DuplicateId(call.id));
        }
        calls.push(call);
    }
    Ok(calls)
}

pub fn parse_corpus_str(text: &str, taxonomy: &TagTaxonomy) -> Result<Vec<AnnotatedCall>, CorpusError> {
    parse_corpus_reader(text.as_bytes(), taxonomy)
}

/// Writes calls back out in the line-delimited record format.
pub fn write_corpus<W: Write>(calls: &[AnnotatedCall], mut out: W) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct OutTurn<'a> {
        speaker: Speaker,
        text: &'a str,
    }
    #[derive(Serialize)]
    struct OutRecord<'a> {
        id: &'a str,
        turns: Vec<OutTurn<'a>>,
        is: &'a IncidentSpecification,
        ci: &'a CallerImage,
    }
    for call in calls {
        let rec = OutRecord {
            id: &call.id,
            turns: call.turns.iter().map(|t| OutTurn { speaker: t.speaker, text: &t.text }).collect(),
            is: &call.is,
            ci: &call.ci,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Calls whose combined label set contains every label in `tags`, in corpus order.
pub fn filter_calls<'a>(
    corpus: &'a [AnnotatedCall],
    tags: &LabelSet,
    taxonomy: &TagTaxonomy,
) -> Result<Vec<&'a AnnotatedCall>, CorpusError> {
    taxonomy.resolve_all(tags)?;
    Ok(corpus
        .iter()
        .filter(|c| {
            let labels = c.labels();
            tags.iter().all(|t| labels.contains(t))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
incident_types = ["crash report"]
scenario_contexts = ["severe weather"]
special_requests = ["medical emergency"]
ci_vulnerable = ["low-income housing area", "mental health", "non-native speaker", "unhoused"]
[ci_general]
age = ["kid", "teenager", "adult", "senior"]
emotion = ["sad", "calm", "neutral", "anxious", "angry", "irrational"]
"#;

    fn minimal() -> TagTaxonomy {
        TagTaxonomy::from_toml(MINIMAL).unwrap()
    }

    #[test]
    fn bundled_taxonomy_counts() {
        let t = TagTaxonomy::bundled();
        assert_eq!(t.incident_types.len(), 57);
        assert_eq!(t.caller_image_label_count(), 14);
    }

    #[test]
    fn minimal_taxonomy_is_valid() {
        let t = minimal();
        assert_eq!(t.incident_types.len(), 1);
        assert_eq!(t.ci_general.age.len(), 4);
        assert_eq!(t.ci_general.emotion.len(), 6);
        assert_eq!(t.ci_vulnerable.len(), 4);
        assert!(t.is_sensitive(&"unhoused".into()));
        assert!(!t.is_sensitive(&"adult".into()));
        assert_eq!(t.sensitivity(&"teleportation".into()), None);
    }

    #[test]
    fn duplicate_label_across_families_is_rejected() {
        let text =
            MINIMAL.replace(r#"scenario_contexts = ["severe weather"]"#, r#"scenario_contexts = ["Crash Report "]"#);
        match TagTaxonomy::from_toml(&text) {
            Err(CorpusError::DuplicateLabel { label, .. }) => assert_eq!(label, "crash report"),
            other => panic!("expected duplicate-label error, got {other:?}"),
        }
    }

    #[test]
    fn missing_family_is_rejected() {
        let text = MINIMAL.replace(r#"incident_types = ["crash report"]"#, "");
        assert!(matches!(TagTaxonomy::from_toml(&text), Err(CorpusError::MissingFamily(Family::IncidentType))));
        let text = MINIMAL.replace(r#", "unhoused""#, "");
        assert!(matches!(TagTaxonomy::from_toml(&text), Err(CorpusError::MissingVulnerableLabel(_))));
    }

    #[test]
    fn taxonomy_round_trips() {
        let t = TagTaxonomy::bundled();
        let back = TagTaxonomy::from_toml(&t.to_toml()).unwrap();
        assert_eq!(t, back);
    }

    fn record(id: &str, incident: &str) -> String {
        format!(
            r#"{{"id":"{id}","turns":[{{"speaker":"calltaker","text":"9-1-1"}},{{"speaker":"caller","text":"Help"}}],"is":{{"incident_type":"{incident}"}},"ci":{{"age":"adult","emotion":"calm"}}}}"#
        )
    }

    #[test]
    fn unknown_tag_is_named() {
        let err = parse_corpus_str(&record("x1", "teleportation"), &minimal()).unwrap_err();
        match err {
            CorpusError::UnknownLabel { record, label } => {
                assert_eq!(record, "x1");
                assert_eq!(label, "teleportation");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fig3_record_carries_six_labels() {
        let line = r#"{"id":"f3","turns":[{"speaker":"caller","text":"There's been a crash"}],
            "is":{"incident_type":"Crash Report","scenario_contexts":["severe weather"],"special_requests":["medical emergency"]},
            "ci":{"age":"adult","emotion":"anxious","vulnerable":["non-native speaker","unhoused"]}}"#
            .replace('\n', " ");
        let calls = parse_corpus_str(&line, &minimal()).unwrap();
        let labels: Vec<String> = calls[0].labels().iter().map(|l| l.to_string()).collect();
        assert_eq!(labels.len(), 7);
        for l in ["crash report", "severe weather", "medical emergency", "adult", "non-native speaker", "unhoused"] {
            assert!(labels.contains(&l.to_string()), "missing {l}");
        }
    }

    #[test]
    fn structural_errors() {
        let t = minimal();
        let empty =
            r#"{"id":"e","turns":[],"is":{"incident_type":"crash report"},"ci":{"age":"adult","emotion":"calm"}}"#;
        assert!(matches!(parse_corpus_str(empty, &t), Err(CorpusError::EmptyTurns(_))));
        let no_caller = r#"{"id":"n","turns":[{"speaker":"calltaker","text":"hi"}],"is":{"incident_type":"crash report"},"ci":{"age":"adult","emotion":"calm"}}"#;
        assert!(matches!(parse_corpus_str(no_caller, &t), Err(CorpusError::NoCallerTurn(_))));
        let blank = r#"{"id":"b","turns":[{"speaker":"caller","text":"   "}],"is":{"incident_type":"crash report"},"ci":{"age":"adult","emotion":"calm"}}"#;
        assert!(matches!(parse_corpus_str(blank, &t), Err(CorpusError::EmptyTurnText { .. })));
        assert!(matches!(parse_corpus_str("{not json", &t), Err(CorpusError::Malformed { line: 1, .. })));
        let wrong = record("w", "adult");
        assert!(matches!(parse_corpus_str(&wrong, &t), Err(CorpusError::WrongFamily { .. })));
        let dup = format!("{}\n{}", record("d", "crash report"), record("d", "crash report"));
        assert!(matches!(parse_corpus_str(&dup, &t), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn filter_edge_cases() {
        let t = minimal();
        let corpus = parse_corpus_str(&record("a", "crash report"), &t).unwrap();
        assert_eq!(filter_calls(&corpus, &LabelSet::new(), &t).unwrap().len(), 1);
        let absent: LabelSet = ["unhoused".into()].into_iter().collect();
        assert!(filter_calls(&corpus, &absent, &t).unwrap().is_empty());
        let unknown: LabelSet = ["zzz".into()].into_iter().collect();
        assert!(matches!(filter_calls(&corpus, &unknown, &t), Err(CorpusError::UnknownTag(_))));
    }
}
