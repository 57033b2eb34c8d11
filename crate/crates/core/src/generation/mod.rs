//! Controlled generation: backend profile selection, three-step prompt
//! assembly and candidate generation through a pluggable backend.

mod backend;
mod profile;
mod prompt;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendClient, CompletionRequest, RuleBasedBackend, ScriptEntry, ScriptedBackend, FABRICATED_ADDRESS,
};
pub use profile::{select_backend, BackendProfile, ProfileKey, ProfileSet};
pub use prompt::{
    assemble_prompt, Excerpt, Exemplar, FactContext, FewShot, GenerationConfig, PromptBundle, TaskExplanation,
};
pub use remote::{ChatCompletionClient, RemoteBackendConfig};

use crate::clock::Clock;
use crate::corpus::{CallerImage, CorpusError, IncidentSpecification, LabelSet, TagTaxonomy, Turn};
use crate::knowledge::KnowledgeError;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Tags(#[from] CorpusError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("profile file: {0}")]
    Profiles(String),
    #[error("duplicate profile for ({age}, {emotion})")]
    DuplicateProfile { age: String, emotion: String },
    #[error("paraphrase for {label:?} contains the label itself")]
    LeakyParaphrase { label: String },
    #[error("no paraphrase for sensitive label {0:?}")]
    MissingParaphrase(String),
    #[error("attempt index must be at least 1")]
    InvalidAttempt,
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend script: {0}")]
    Script(String),
}

impl GenerationError {
    /// Transport failures may succeed on retry; everything else is permanent.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::Transport(_))
    }
}

/// The tag bundle that configures one simulation runtime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationInstruction {
    pub is: IncidentSpecification,
    pub ci: CallerImage,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationInstruction {
    pub fn validate(&self, taxonomy: &TagTaxonomy) -> Result<(), CorpusError> {
        self.is.validate(taxonomy, "instruction")?;
        self.ci.validate(taxonomy, "instruction")
    }

    pub fn labels(&self) -> LabelSet {
        let mut all = self.is.labels();
        all.extend(self.ci.labels());
        all
    }

    /// Labels that may be shown to a trainee.
    pub fn displayable_labels(&self, taxonomy: &TagTaxonomy) -> LabelSet {
        self.labels().into_iter().filter(|l| !taxonomy.is_sensitive(l)).collect()
    }
}

/// Ablation switches. `no_all` implies every other switch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Knowledge construction: retrieval ignores tags and the factual bases are not consulted.
    pub no_kc: bool,
    /// Detailed task explanation section.
    pub no_cot: bool,
    /// Few-shot caller-image section.
    pub no_fsp: bool,
    /// Fact-context section.
    pub no_rag: bool,
    /// Validation loop: attempt 1 is accepted unchecked.
    pub no_vlc: bool,
    pub no_all: bool,
}

impl Ablation {
    pub const ROW_NAMES: [&'static str; 7] = ["full", "no-kc", "no-cot", "no-fsp", "no-rag", "no-vlc", "no-all"];

    pub fn full() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self { no_kc: true, no_cot: true, no_fsp: true, no_rag: true, no_vlc: true, no_all: true }
    }

    /// Applies the `no_all` implication.
    pub fn normalized(self) -> Self {
        if self.no_all {
            Self::all()
        } else {
            self
        }
    }

    /// Parses one ablation-matrix row name (`full`, `no-kc`, ..., `no-all`).
    pub fn from_row_name(name: &str) -> Option<Self> {
        let mut a = Self::default();
        match name.trim().to_ascii_lowercase().as_str() {
            "full" => {}
            "no-kc" => a.no_kc = true,
            "no-cot" => a.no_cot = true,
            "no-fsp" => a.no_fsp = true,
            "no-rag" => a.no_rag = true,
            "no-vlc" => a.no_vlc = true,
            "no-all" => return Some(Self::all()),
            _ => return None,
        }
        Some(a)
    }

    /// Short name, `+`-joined for combinations.
    pub fn name(&self) -> String {
        let a = self.normalized();
        if a.no_all {
            return "no-all".into();
        }
        let parts: Vec<&str> = [
            (a.no_kc, "no-kc"),
            (a.no_cot, "no-cot"),
            (a.no_fsp, "no-fsp"),
            (a.no_rag, "no-rag"),
            (a.no_vlc, "no-vlc"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }

    pub fn matrix() -> Vec<Self> {
        Self::ROW_NAMES.iter().map(|n| Self::from_row_name(n).unwrap()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub text: String,
    pub attempt: u32,
    pub elapsed_ms: u64,
    pub tokens: usize,
}

/// Per-call inputs beyond the bundle: history, profile and determinism keys.
pub struct GenerationInput<'a> {
    pub bundle: &'a PromptBundle,
    pub history: &'a [Turn],
    pub profile: &'a BackendProfile,
    pub seed: u64,
    /// Index of the caller turn being produced within the session.
    pub call_index: u64,
}

pub fn generate_candidate(
    client: &dyn BackendClient,
    input: &GenerationInput<'_>,
    attempt: u32,
    clock: &dyn Clock,
) -> Result<CandidateResponse, GenerationError> {
    if attempt < 1 {
        return Err(GenerationError::InvalidAttempt);
    }
    let request = CompletionRequest {
        bundle: input.bundle,
        history: input.history,
        profile: input.profile,
        attempt,
        seed: input.seed,
        call_index: input.call_index,
    };
    let start = clock.now_ms();
    let text = client.complete(&request)?;
    let elapsed_ms = clock.now_ms().saturating_sub(start);
    let tokens = crate::text::tokenize(&text).len();
    Ok(CandidateResponse { text, attempt, elapsed_ms, tokens })
}

/// Seed used for the `n`-th regeneration of a rejected turn (`n = 0` is the session seed).
pub fn regeneration_seed(seed: u64, n: u32) -> u64 {
    if n == 0 {
        seed
    } else {
        backend::stream_seed(seed, u64::MAX - n as u64, 0)
    }
}
