//! Bounded generate/check loop, session state and feedback capture.
//!
//! Each caller turn is produced by up to `T` backend attempts. An attempt is
//! run through the format, alignment and factual checks in that order and is
//! discarded at the first failure. The first attempt that passes all three
//! is accepted; if none does, the attempt that passed the most checks is
//! returned (earliest on ties) and flagged as best-available.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::copilot::{ExtractiveAnswerer, IncidentClassifier, QuestionId};
use crate::corpus::{Speaker, TagTaxonomy, Turn};
use crate::generation::{
    assemble_prompt, generate_candidate, select_backend, Ablation, BackendClient, CandidateResponse, GenerationConfig,
    GenerationError, GenerationInput, ProfileSet, PromptBundle, SimulationInstruction,
};
use crate::knowledge::{lookup_address, AddressGazetteer, KnowledgeSet};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("session is {0:?}, not active")]
    NotActive(SessionStatus),
    #[error("the caller already spoke last; a call-taker turn is expected")]
    AwaitingCalltaker,
    #[error("call-taker text is empty")]
    EmptyTraineeTurn,
    #[error("turn {0} does not exist")]
    InvalidTurn(usize),
    #[error("turn {0} is not a caller turn")]
    NotCallerTurn(usize),
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(u8),
    #[error("turn {0} has not been rejected")]
    NotRejected(usize),
    #[error("only the latest caller turn can be regenerated")]
    NotLatestCallerTurn,
    #[error("backend failed on attempt {attempt} after {tries} tries: {source}")]
    Backend {
        attempt: u32,
        tries: u32,
        #[source]
        source: GenerationError,
    },
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Format,
    Alignment,
    Factual,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: CheckKind,
    pub passed: bool,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    /// The check could not run (model failure); counted as a failure.
    #[serde(default, skip_serializing_if = "is_false")]
    pub errored: bool,
}

impl CheckResult {
    fn pass(check: CheckKind, detail: impl Into<String>, extracted: Option<String>) -> Self {
        Self { check, passed: true, detail: detail.into(), extracted, errored: false }
    }

    fn fail(check: CheckKind, detail: impl Into<String>, extracted: Option<String>) -> Self {
        Self { check, passed: false, detail: detail.into(), extracted, errored: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Loop threshold `T`.
    pub threshold: u32,
    /// Alignment passes when classifier confidence is below this.
    pub abstain_threshold: f64,
    /// Longest accepted caller utterance, in characters.
    pub max_chars: usize,
    /// Extra tries per attempt on transport failure.
    pub transport_retries: u32,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { threshold: 3, abstain_threshold: 0.2, max_chars: 600, transport_retries: 2 }
    }
}

static ROLE_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^\s*(caller|dispatcher|call[- ]?taker|operator|trainee|assistant|user|system|911)\s*:").unwrap()
});

pub fn check_format(candidate: &CandidateResponse, config: &ValidationConfig) -> CheckResult {
    let text = candidate.text.trim();
    if text.is_empty() {
        return CheckResult::fail(CheckKind::Format, "empty response", None);
    }
    let chars = text.chars().count();
    if chars > config.max_chars {
        return CheckResult::fail(
            CheckKind::Format,
            format!("response is {chars} characters, cap is {}", config.max_chars),
            None,
        );
    }
    if let Some(m) = ROLE_PREFIX.find(text) {
        return CheckResult::fail(CheckKind::Format, format!("speaker-role marker {:?}", m.as_str().trim()), None);
    }
    if text.contains("###") {
        return CheckResult::fail(CheckKind::Format, "prompt section delimiter in response", None);
    }
    CheckResult::pass(CheckKind::Format, "", None)
}

pub fn check_alignment(
    candidate: &CandidateResponse,
    instruction: &SimulationInstruction,
    classifier: &dyn IncidentClassifier,
    history: &[Turn],
    config: &ValidationConfig,
) -> CheckResult {
    let mut turns = history.to_vec();
    turns.push(Turn::caller(candidate.text.clone(), history.len()));
    match classifier.classify(&turns) {
        Err(e) => CheckResult {
            check: CheckKind::Alignment,
            passed: false,
            detail: format!("classifier error: {e}"),
            extracted: None,
            errored: true,
        },
        Ok(c) => {
            let predicted = Some(c.label.to_string());
            if c.label == instruction.is.incident_type {
                CheckResult::pass(CheckKind::Alignment, format!("confidence {:.3}", c.confidence), predicted)
            } else if c.confidence < config.abstain_threshold {
                CheckResult::pass(
                    CheckKind::Alignment,
                    format!("abstain: confidence {:.3} below {}", c.confidence, config.abstain_threshold),
                    predicted,
                )
            } else {
                CheckResult::fail(
                    CheckKind::Alignment,
                    format!(
                        "predicted {} (confidence {:.3}), expected {}",
                        c.label, c.confidence, instruction.is.incident_type
                    ),
                    predicted,
                )
            }
        }
    }
}

pub fn check_factual(
    candidate: &CandidateResponse,
    answerer: &dyn ExtractiveAnswerer,
    gazetteer: &AddressGazetteer,
) -> CheckResult {
    let turn = Turn::caller(candidate.text.clone(), 0);
    match answerer.answer(&turn, &QuestionId::address()) {
        Err(e) => CheckResult {
            check: CheckKind::Factual,
            passed: false,
            detail: format!("answerer error: {e}"),
            extracted: None,
            errored: true,
        },
        Ok(a) => match a.span {
            None => CheckResult::pass(CheckKind::Factual, "no address given", None),
            Some(span) => {
                let m = lookup_address(gazetteer, &span);
                if m.matched {
                    CheckResult::pass(
                        CheckKind::Factual,
                        format!("matched {:?}", m.canonical.unwrap_or_default()),
                        Some(span),
                    )
                } else {
                    CheckResult::fail(
                        CheckKind::Factual,
                        format!("address {span:?} not found in gazetteer"),
                        Some(span),
                    )
                }
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub candidate: CandidateResponse,
    /// Checks run on this attempt, stopping at the first failure.
    pub checks: Vec<CheckResult>,
}

impl AttemptRecord {
    pub fn passed_count(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.len() == 3 && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalStatus {
    Validated,
    BestAvailable,
    /// The validation loop is ablated; attempt 1 is taken as is.
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub turn_index: usize,
    pub loop_threshold: u32,
    pub attempts: Vec<AttemptRecord>,
    /// 1-based attempt whose candidate became the caller turn.
    pub final_attempt: u32,
    pub status: FinalStatus,
}

impl ValidationReport {
    pub fn accepted(&self) -> &CandidateResponse {
        &self.attempts[self.final_attempt as usize - 1].candidate
    }

    pub fn is_best_available(&self) -> bool {
        self.status == FinalStatus::BestAvailable
    }

    /// Failed results of the given check across all attempts.
    pub fn failures(&self, check: CheckKind) -> usize {
        self.attempts.iter().flat_map(|a| &a.checks).filter(|c| c.check == check && !c.passed).count()
    }
}

/// Shared, read-only dependencies of the loop.
pub struct LoopDeps<'a> {
    pub client: &'a dyn BackendClient,
    pub knowledge: &'a KnowledgeSet,
    pub classifier: &'a dyn IncidentClassifier,
    pub answerer: &'a dyn ExtractiveAnswerer,
    pub profiles: &'a ProfileSet,
    pub config: ValidationConfig,
    pub clock: &'a dyn Clock,
}

fn run_checks(
    candidate: &CandidateResponse,
    instruction: &SimulationInstruction,
    history: &[Turn],
    deps: &LoopDeps<'_>,
) -> Vec<CheckResult> {
    let mut checks = vec![check_format(candidate, &deps.config)];
    if !checks[0].passed {
        return checks;
    }
    checks.push(check_alignment(candidate, instruction, deps.classifier, history, &deps.config));
    if !checks[1].passed {
        return checks;
    }
    checks.push(check_factual(candidate, deps.answerer, &deps.knowledge.gazetteer));
    checks
}

fn generate_with_retries(
    deps: &LoopDeps<'_>,
    input: &GenerationInput<'_>,
    attempt: u32,
) -> Result<CandidateResponse, ValidationError> {
    let mut tries = 0;
    loop {
        tries += 1;
        match generate_candidate(deps.client, input, attempt, deps.clock) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_retryable() && tries <= deps.config.transport_retries => continue,
            Err(e) => return Err(ValidationError::Backend { attempt, tries, source: e }),
        }
    }
}

/// One run of the loop for the caller turn that follows `history`.
pub fn run_loop(
    instruction: &SimulationInstruction,
    ablation: Ablation,
    bundle: &PromptBundle,
    history: &[Turn],
    seed: u64,
    deps: &LoopDeps<'_>,
) -> Result<(Turn, ValidationReport), ValidationError> {
    let profile = select_backend(&instruction.ci, deps.profiles);
    let call_index = history.iter().filter(|t| t.speaker == Speaker::Caller).count() as u64;
    let input = GenerationInput { bundle, history, profile, seed, call_index };
    let threshold = deps.config.threshold.max(1);
    let turn_index = history.len();
    let mut attempts = Vec::new();

    if ablation.normalized().no_vlc {
        let candidate = generate_with_retries(deps, &input, 1)?;
        let turn = Turn::caller(candidate.text.clone(), turn_index);
        attempts.push(AttemptRecord { candidate, checks: Vec::new() });
        let report = ValidationReport {
            turn_index,
            loop_threshold: threshold,
            attempts,
            final_attempt: 1,
            status: FinalStatus::Unchecked,
        };
        return Ok((turn, report));
    }

    for attempt in 1..=threshold {
        let candidate = generate_with_retries(deps, &input, attempt)?;
        let checks = run_checks(&candidate, instruction, history, deps);
        let record = AttemptRecord { candidate, checks };
        let done = record.all_passed();
        attempts.push(record);
        if done {
            let turn = Turn::caller(attempts[attempt as usize - 1].candidate.text.clone(), turn_index);
            let report = ValidationReport {
                turn_index,
                loop_threshold: threshold,
                attempts,
                final_attempt: attempt,
                status: FinalStatus::Validated,
            };
            return Ok((turn, report));
        }
    }

    let mut best = 0;
    for (i, a) in attempts.iter().enumerate() {
        if a.passed_count() > attempts[best].passed_count() {
            best = i;
        }
    }
    let turn = Turn::caller(attempts[best].candidate.text.clone(), turn_index);
    let report = ValidationReport {
        turn_index,
        loop_threshold: threshold,
        attempts,
        final_attempt: best as u32 + 1,
        status: FinalStatus::BestAvailable,
    };
    Ok((turn, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session_id: String,
    pub turn_index: usize,
    pub rating: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub rejected: bool,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Completed,
    Aborted,
}

/// A caller turn replaced after rejection, with the report that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersededTurn {
    pub turn: Turn,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub instruction: SimulationInstruction,
    pub ablation: Ablation,
    pub bundle: PromptBundle,
    pub history: Vec<Turn>,
    /// One report per current caller turn, in the order they were produced.
    pub reports: Vec<ValidationReport>,
    pub feedback: Vec<FeedbackRecord>,
    pub status: SessionStatus,
    /// Caller turns rejected by the trainee and not yet regenerated.
    pub rejected: BTreeSet<usize>,
    pub superseded: Vec<SupersededTurn>,
    #[serde(default)]
    pub regenerations: u32,
}

impl SessionState {
    /// Validates the instruction and assembles the prompt bundle. No backend call.
    pub fn new(
        id: impl Into<String>,
        instruction: SimulationInstruction,
        ablation: Ablation,
        knowledge: &KnowledgeSet,
        profiles: &ProfileSet,
        generation: &GenerationConfig,
    ) -> Result<Self, ValidationError> {
        let bundle = assemble_prompt(&instruction, knowledge, profiles, ablation, generation)?;
        Ok(Self {
            id: id.into(),
            instruction,
            ablation: ablation.normalized(),
            bundle,
            history: Vec::new(),
            reports: Vec::new(),
            feedback: Vec::new(),
            status: SessionStatus::Active,
            rejected: BTreeSet::new(),
            superseded: Vec::new(),
            regenerations: 0,
        })
    }

    fn ensure_active(&self) -> Result<(), ValidationError> {
        match self.status {
            SessionStatus::Active => Ok(()),
            s => Err(ValidationError::NotActive(s)),
        }
    }

    pub fn caller_turns(&self) -> impl Iterator<Item = &Turn> {
        self.history.iter().filter(|t| t.speaker == Speaker::Caller)
    }

    pub fn report_for(&self, turn_index: usize) -> Option<&ValidationReport> {
        self.reports.iter().find(|r| r.turn_index == turn_index)
    }

    /// Produces the next caller turn without changing the session. The last
    /// history turn must be the call-taker's, or the history empty.
    pub fn validated_generate(&self, deps: &LoopDeps<'_>) -> Result<(Turn, ValidationReport), ValidationError> {
        self.ensure_active()?;
        if self.history.last().is_some_and(|t| t.speaker == Speaker::Caller) {
            return Err(ValidationError::AwaitingCalltaker);
        }
        run_loop(&self.instruction, self.ablation, &self.bundle, &self.history, self.instruction.seed, deps)
    }

    fn push_reply(&mut self, turn: Turn, report: ValidationReport) -> usize {
        let i = turn.index;
        self.history.push(turn);
        self.reports.push(report);
        i
    }

    /// Generates the caller's opening line.
    pub fn open(&mut self, deps: &LoopDeps<'_>) -> Result<usize, ValidationError> {
        if !self.history.is_empty() {
            return Err(ValidationError::AwaitingCalltaker);
        }
        let (turn, report) = self.validated_generate(deps)?;
        Ok(self.push_reply(turn, report))
    }

    /// Appends the call-taker's turn and the caller's validated reply.
    /// Returns the reply's turn index. On error the session is unchanged.
    pub fn respond(&mut self, trainee_text: &str, deps: &LoopDeps<'_>) -> Result<usize, ValidationError> {
        self.ensure_active()?;
        if trainee_text.trim().is_empty() {
            return Err(ValidationError::EmptyTraineeTurn);
        }
        if self.history.last().is_some_and(|t| t.speaker == Speaker::Calltaker) {
            return Err(ValidationError::AwaitingCalltaker);
        }
        self.history.push(Turn::calltaker(trainee_text.trim(), self.history.len()));
        match self.validated_generate(deps) {
            Ok((turn, report)) => Ok(self.push_reply(turn, report)),
            Err(e) => {
                self.history.pop();
                Err(e)
            }
        }
    }

    pub fn record_feedback(
        &mut self,
        turn_index: usize,
        rating: u8,
        comment: Option<String>,
        rejected: bool,
        clock: &dyn Clock,
    ) -> Result<FeedbackRecord, ValidationError> {
        let turn = self.history.get(turn_index).ok_or(ValidationError::InvalidTurn(turn_index))?;
        if turn.speaker != Speaker::Caller {
            return Err(ValidationError::NotCallerTurn(turn_index));
        }
        if !(1..=5).contains(&rating) {
            return Err(ValidationError::RatingOutOfRange(rating));
        }
        let record = FeedbackRecord {
            session_id: self.id.clone(),
            turn_index,
            rating,
            comment: comment.filter(|c| !c.trim().is_empty()),
            rejected,
            timestamp_ms: clock.now_ms(),
        };
        if rejected {
            self.rejected.insert(turn_index);
        }
        self.feedback.push(record.clone());
        Ok(record)
    }

    /// Replaces a rejected caller turn with a fresh loop run (fresh budget).
    /// Only the latest caller turn can be regenerated, and only while the
    /// call-taker has not answered it.
    pub fn regenerate(&mut self, turn_index: usize, deps: &LoopDeps<'_>) -> Result<usize, ValidationError> {
        self.ensure_active()?;
        if !self.rejected.contains(&turn_index) {
            return Err(ValidationError::NotRejected(turn_index));
        }
        if turn_index + 1 != self.history.len() {
            return Err(ValidationError::NotLatestCallerTurn);
        }
        let seed = crate::generation::regeneration_seed(self.instruction.seed, self.regenerations + 1);
        let (turn, report) =
            run_loop(&self.instruction, self.ablation, &self.bundle, &self.history[..turn_index], seed, deps)?;
        let old_turn = self.history.pop().expect("turn exists");
        let pos = self.reports.iter().position(|r| r.turn_index == turn_index).expect("every caller turn has a report");
        let old_report = self.reports.remove(pos);
        self.superseded.push(SupersededTurn { turn: old_turn, report: old_report });
        self.rejected.remove(&turn_index);
        self.regenerations += 1;
        Ok(self.push_reply(turn, report))
    }

    pub fn end(&mut self) -> Result<(), ValidationError> {
        self.ensure_active()?;
        self.status = SessionStatus::Completed;
        Ok(())
    }

    pub fn abort(&mut self) {
        if self.status == SessionStatus::Active {
            self.status = SessionStatus::Aborted;
        }
    }
}

/// Compact, display-safe view of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub turn_index: usize,
    pub status: FinalStatus,
    pub attempts: usize,
    pub final_attempt: u32,
    /// Failed check kinds across all attempts, with counts.
    pub failures: Vec<(CheckKind, usize)>,
}

impl From<&ValidationReport> for ReportSummary {
    fn from(r: &ValidationReport) -> Self {
        let failures = [CheckKind::Format, CheckKind::Alignment, CheckKind::Factual]
            .into_iter()
            .map(|k| (k, r.failures(k)))
            .filter(|(_, n)| *n > 0)
            .collect();
        Self {
            turn_index: r.turn_index,
            status: r.status,
            attempts: r.attempts.len(),
            final_attempt: r.final_attempt,
            failures,
        }
    }
}

/// What a trainee may see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraineeView {
    pub id: String,
    pub status: SessionStatus,
    pub tags: Vec<String>,
    pub turns: Vec<Turn>,
    pub reports: Vec<ReportSummary>,
    pub feedback: Vec<FeedbackRecord>,
    pub rejected: Vec<usize>,
    pub superseded: Vec<Turn>,
}

impl TraineeView {
    pub fn of(session: &SessionState, taxonomy: &TagTaxonomy) -> Self {
        Self {
            id: session.id.clone(),
            status: session.status,
            tags: session.instruction.displayable_labels(taxonomy).iter().map(|l| l.to_string()).collect(),
            turns: session.history.clone(),
            reports: session.reports.iter().map(ReportSummary::from).collect(),
            feedback: session.feedback.clone(),
            rejected: session.rejected.iter().copied().collect(),
            superseded: session.superseded.iter().map(|s| s.turn.clone()).collect(),
        }
    }
}

pub const REDACTED: &str = "[redacted]";

/// Replaces every sensitive label (case-insensitive) in `text`.
pub fn redact_text(text: &str, taxonomy: &TagTaxonomy) -> String {
    let mut labels: Vec<String> = taxonomy.sensitive_labels().map(|l| regex::escape(l.as_str())).collect();
    if labels.is_empty() {
        return text.to_string();
    }
    labels.sort_by_key(|l| std::cmp::Reverse(l.len()));
    let re = Regex::new(&format!("(?i){}", labels.join("|"))).expect("escaped labels form a valid pattern");
    re.replace_all(text, REDACTED).into_owned()
}

/// Redacts every string (and object key) inside a JSON value.
pub fn redact_value(value: &mut serde_json::Value, taxonomy: &TagTaxonomy) {
    use serde_json::Value;
    match value {
        Value::String(s) => *s = redact_text(s, taxonomy),
        Value::Array(items) => items.iter_mut().for_each(|v| redact_value(v, taxonomy)),
        Value::Object(map) => {
            let entries: Vec<(String, Value)> = std::mem::take(map).into_iter().collect();
            for (k, mut v) in entries {
                redact_value(&mut v, taxonomy);
                map.insert(redact_text(&k, taxonomy), v);
            }
        }
        _ => {}
    }
}

/// Trainee view serialised to JSON with sensitive labels scrubbed.
pub fn trainee_payload(session: &SessionState, taxonomy: &TagTaxonomy) -> serde_json::Value {
    let mut v = serde_json::to_value(TraineeView::of(session, taxonomy)).expect("view serialises");
    redact_value(&mut v, taxonomy);
    v
}

/// True if `text` contains any sensitive label (case-insensitive).
pub fn contains_sensitive(text: &str, taxonomy: &TagTaxonomy) -> bool {
    let lower = text.to_lowercase();
    taxonomy.sensitive_labels().any(|l| lower.contains(l.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(text: &str) -> CandidateResponse {
        CandidateResponse { text: text.into(), attempt: 1, elapsed_ms: 0, tokens: 0 }
    }

    #[test]
    fn format_rules() {
        let cfg = ValidationConfig::default();
        assert!(check_format(&cand("My address is 322 Broadway."), &cfg).passed);
        let multi = check_format(&cand("Caller: hello\nDispatcher: hi"), &cfg);
        assert!(!multi.passed && !multi.detail.is_empty());
        assert!(!check_format(&cand(""), &cfg).passed);
        assert!(!check_format(&cand("   "), &cfg).passed);
        assert!(!check_format(&cand(&"a".repeat(601)), &cfg).passed);
        assert!(check_format(&cand("The caller: no, I mean my neighbour"), &cfg).passed);
    }

    #[test]
    fn redaction_is_case_insensitive() {
        let t = TagTaxonomy::bundled();
        let out = redact_text("An Unhoused man, a NON-NATIVE speaker.", &t);
        assert!(!contains_sensitive(&out, &t), "{out}");
        assert_eq!(out, "An [redacted] man, a [redacted].");
    }
}
