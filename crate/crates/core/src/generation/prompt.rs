//! Three-step prompt assembly: fact context, task explanation and few-shot
//! caller exemplars.
//!
//! Sections are kept structured and rendered to a delimited plain-text
//! template. Each section renders independently, so dropping one leaves the
//! bytes of the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{select_backend, ProfileKey, ProfileSet};
use super::{Ablation, GenerationError, SimulationInstruction};
use crate::corpus::{Label, LabelSet};
use crate::knowledge::KnowledgeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Retrieved calls cited in the fact context.
    pub k_context: usize,
    /// Caller utterances in the few-shot section.
    pub k_few_shot: usize,
    /// Gazetteer addresses offered as incident locations.
    pub n_addresses: usize,
    /// Caller turns quoted per retrieved call.
    pub excerpt_turns: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { k_context: 4, k_few_shot: 4, n_addresses: 3, excerpt_turns: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excerpt {
    pub call_id: String,
    pub text: String,
}

pub type Exemplar = Excerpt;

/// Step 1: retrieved call excerpts plus factual-base notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactContext {
    pub excerpts: Vec<Excerpt>,
    pub protocol_questions: Vec<String>,
    /// Set when the factual bases were consulted but hold no tree for the incident type.
    pub protocol_note: Option<String>,
    pub addresses: Vec<String>,
    pub landmarks: Vec<String>,
}

/// Step 2: stepwise description of the incident and caller behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExplanation {
    pub incident_type: Label,
    pub scenario_contexts: Vec<Label>,
    pub special_requests: Vec<Label>,
    /// Behavioural descriptions standing in for sensitive caller traits.
    pub behaviour: Vec<String>,
    pub steps: Vec<String>,
}

/// Step 3: caller utterances from calls that share the caller-image tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    pub exemplars: Vec<Exemplar>,
    /// Present when no call matched.
    pub marker: Option<String>,
}

pub const NO_EXEMPLARS: &str = "no exemplars";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub profile_key: Option<ProfileKey>,
    pub persona: String,
    /// Display-safe echo of the instruction (general labels only).
    pub brief: String,
    pub fact_context: Option<FactContext>,
    pub task_explanation: Option<TaskExplanation>,
    pub few_shot: Option<FewShot>,
}

fn labels_phrase(labels: &[Label]) -> String {
    let parts: Vec<&str> = labels.iter().map(Label::as_str).collect();
    parts.join(", ")
}

pub fn assemble_prompt(
    instruction: &SimulationInstruction,
    knowledge: &KnowledgeSet,
    profiles: &ProfileSet,
    ablation: Ablation,
    config: &GenerationConfig,
) -> Result<PromptBundle, GenerationError> {
    instruction.validate(&knowledge.taxonomy)?;
    let ablation = ablation.normalized();
    let is = &instruction.is;
    let ci = &instruction.ci;
    let profile = select_backend(ci, profiles);

    let is_labels = is.labels();
    let query = is_labels.iter().map(Label::as_str).collect::<Vec<_>>().join(" ");

    let fact_context = if ablation.no_rag {
        None
    } else {
        let tags: LabelSet = if ablation.no_kc { LabelSet::new() } else { is.labels() };
        let hits = knowledge.retrieve(&tags, &query, config.k_context.max(1))?;
        let excerpts = hits
            .iter()
            .map(|h| {
                let quoted: Vec<&str> =
                    h.entry.excerpts.iter().take(config.excerpt_turns).map(String::as_str).collect();
                Excerpt { call_id: h.entry.call_id.clone(), text: quoted.join(" ") }
            })
            .collect();
        let mut fc = FactContext {
            excerpts,
            protocol_questions: Vec::new(),
            protocol_note: None,
            addresses: Vec::new(),
            landmarks: Vec::new(),
        };
        if !ablation.no_kc {
            match knowledge.protocols.get(&is.incident_type) {
                Some(tree) => fc.protocol_questions = tree.depth_first().iter().map(|n| n.question.clone()).collect(),
                None => fc.protocol_note = Some(format!("no protocol tree for {}", is.incident_type)),
            }
            let entries = knowledge.gazetteer.entries();
            if !entries.is_empty() && config.n_addresses > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(instruction.seed);
                let n = config.n_addresses.min(entries.len());
                for i in rand::seq::index::sample(&mut rng, entries.len(), n) {
                    let raw = &entries[i].raw;
                    if let Some(d) = knowledge.connectivity.describe(raw) {
                        fc.landmarks.push(d);
                    }
                    fc.addresses.push(raw.clone());
                }
            }
        }
        Some(fc)
    };

    let task_explanation = if ablation.no_cot {
        None
    } else {
        let mut behaviour = Vec::new();
        for v in &ci.vulnerable {
            let text = profiles.paraphrase(v).ok_or_else(|| GenerationError::MissingParaphrase(v.to_string()))?;
            behaviour.push(text.to_string());
        }
        let contexts: Vec<Label> = is.scenario_contexts.iter().cloned().collect();
        let requests: Vec<Label> = is.special_requests.iter().cloned().collect();
        let mut steps = vec![format!("You are calling 9-1-1 to report a {} incident.", is.incident_type)];
        if !contexts.is_empty() {
            steps.push(format!("The situation involves: {}.", labels_phrase(&contexts)));
        }
        if !requests.is_empty() {
            steps.push(format!("You also need: {}.", labels_phrase(&requests)));
        }
        steps.push(format!("You are a {} caller and you feel {}.", ci.age, ci.emotion));
        for b in &behaviour {
            steps.push(format!("The caller {b}."));
        }
        steps.push("Give details only when the call-taker asks for them, one answer per turn.".into());
        steps.push("Reply with a single caller utterance and no speaker labels.".into());
        Some(TaskExplanation {
            incident_type: is.incident_type.clone(),
            scenario_contexts: contexts,
            special_requests: requests,
            behaviour,
            steps,
        })
    };

    let few_shot = if ablation.no_fsp {
        None
    } else {
        let tags: LabelSet = if ablation.no_kc { LabelSet::new() } else { ci.labels() };
        let k_calls = config.k_few_shot.max(1);
        let hits = knowledge.retrieve(&tags, &query, k_calls)?;
        let mut exemplars = Vec::new();
        let mut round = 0;
        while exemplars.len() < config.k_few_shot {
            let mut any = false;
            for h in &hits {
                if let Some(t) = h.entry.excerpts.get(round) {
                    any = true;
                    if exemplars.len() < config.k_few_shot {
                        exemplars.push(Exemplar { call_id: h.entry.call_id.clone(), text: t.clone() });
                    }
                }
            }
            if !any {
                break;
            }
            round += 1;
        }
        let marker = exemplars.is_empty().then(|| NO_EXEMPLARS.to_string());
        Some(FewShot { exemplars, marker })
    };

    let general: Vec<String> = std::iter::once(format!("incident: {}", is.incident_type))
        .chain(is.scenario_contexts.iter().map(|l| format!("context: {l}")))
        .chain(is.special_requests.iter().map(|l| format!("request: {l}")))
        .chain([format!("age: {}", ci.age), format!("emotion: {}", ci.emotion)])
        .collect();

    Ok(PromptBundle {
        profile_key: profile.key.clone(),
        persona: profile.persona.clone(),
        brief: general.join("; "),
        fact_context,
        task_explanation,
        few_shot,
    })
}

impl FactContext {
    pub fn render(&self) -> String {
        let mut out = String::from("### FACT CONTEXT\n");
        if !self.excerpts.is_empty() {
            out.push_str("Excerpts from past calls:\n");
            for e in &self.excerpts {
                out.push_str(&format!("- [{}] {}\n", e.call_id, e.text));
            }
        }
        if !self.protocol_questions.is_empty() {
            out.push_str("Questions the call-taker is likely to ask:\n");
            for q in &self.protocol_questions {
                out.push_str(&format!("- {q}\n"));
            }
        }
        if let Some(note) = &self.protocol_note {
            out.push_str(&format!("Note: {note}\n"));
        }
        if !self.addresses.is_empty() {
            out.push_str("Real addresses you may use as the incident location:\n");
            for a in &self.addresses {
                out.push_str(&format!("- {a}\n"));
            }
        }
        for l in &self.landmarks {
            out.push_str(&format!("Nearby: {l}\n"));
        }
        out
    }
}

impl TaskExplanation {
    pub fn render(&self) -> String {
        let mut out = String::from("### TASK EXPLANATION\n");
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. {s}\n", i + 1));
        }
        out
    }
}

impl FewShot {
    pub fn render(&self) -> String {
        let mut out = String::from("### FEW-SHOT EXAMPLES\n");
        if let Some(m) = &self.marker {
            out.push_str(&format!("({m})\n"));
        }
        for e in &self.exemplars {
            out.push_str(&format!("- \"{}\"\n", e.text));
        }
        out
    }
}

impl PromptBundle {
    /// Deterministic plain-text rendering sent to text backends.
    pub fn render(&self) -> String {
        let mut out = format!("### CALLER PROFILE\n{}\n({})\n", self.persona, self.brief);
        if let Some(s) = &self.fact_context {
            out.push_str(&s.render());
        }
        if let Some(s) = &self.task_explanation {
            out.push_str(&s.render());
        }
        if let Some(s) = &self.few_shot {
            out.push_str(&s.render());
        }
        out.push_str("### END\n");
        out
    }

    pub fn sections_present(&self) -> [bool; 3] {
        [self.fact_context.is_some(), self.task_explanation.is_some(), self.few_shot.is_some()]
    }
}
