//! Backend profiles keyed by the non-sensitive caller-image tags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::corpus::{CallerImage, Label, TagTaxonomy};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProfileKey {
    pub age: Label,
    pub emotion: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    /// `None` for the default profile.
    pub key: Option<ProfileKey>,
    pub persona: String,
    pub temperature: f64,
    pub max_length: usize,
}

#[derive(Deserialize)]
struct RawProfile {
    age: Option<String>,
    emotion: Option<String>,
    persona: String,
    #[serde(default)]
    temperature: f64,
    #[serde(default = "default_max_length")]
    max_length: usize,
}

fn default_max_length() -> usize {
    400
}

#[derive(Deserialize)]
struct RawProfileSet {
    default: RawProfile,
    #[serde(default)]
    profile: Vec<RawProfile>,
    #[serde(default)]
    paraphrases: BTreeMap<String, String>,
}

/// One profile per (age, emotion) pair plus a default, and the paraphrase
/// table used to describe sensitive caller traits in prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    default: BackendProfile,
    profiles: BTreeMap<ProfileKey, BackendProfile>,
    paraphrases: BTreeMap<Label, String>,
}

impl ProfileSet {
    pub fn bundled() -> Self {
        Self::from_toml(crate::defaults::PROFILES).expect("bundled profiles are valid")
    }

    pub fn load(path: &Path) -> Result<Self, GenerationError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GenerationError::Profiles(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, GenerationError> {
        let raw: RawProfileSet = toml::from_str(text).map_err(|e| GenerationError::Profiles(e.to_string()))?;
        let default = BackendProfile {
            key: None,
            persona: raw.default.persona,
            temperature: raw.default.temperature,
            max_length: raw.default.max_length,
        };
        let mut profiles = BTreeMap::new();
        for p in raw.profile {
            let (Some(age), Some(emotion)) = (p.age, p.emotion) else {
                return Err(GenerationError::Profiles("profile without age and emotion".into()));
            };
            let key = ProfileKey { age: Label::new(&age), emotion: Label::new(&emotion) };
            let profile = BackendProfile {
                key: Some(key.clone()),
                persona: p.persona,
                temperature: p.temperature,
                max_length: p.max_length,
            };
            if profiles.insert(key, profile).is_some() {
                return Err(GenerationError::DuplicateProfile { age, emotion });
            }
        }
        let mut paraphrases = BTreeMap::new();
        for (label, text) in raw.paraphrases {
            let label = Label::new(&label);
            if text.to_lowercase().contains(label.as_str()) {
                return Err(GenerationError::LeakyParaphrase { label: label.to_string() });
            }
            paraphrases.insert(label, text);
        }
        Ok(Self { default, profiles, paraphrases })
    }

    pub fn default_profile(&self) -> &BackendProfile {
        &self.default
    }

    pub fn get(&self, key: &ProfileKey) -> Option<&BackendProfile> {
        self.profiles.get(key)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn paraphrase(&self, label: &Label) -> Option<&str> {
        self.paraphrases.get(label).map(String::as_str)
    }

    /// Every sensitive label in the taxonomy must have a paraphrase.
    pub fn check_paraphrases(&self, taxonomy: &TagTaxonomy) -> Result<(), GenerationError> {
        for l in taxonomy.sensitive_labels() {
            if !self.paraphrases.contains_key(l) {
                return Err(GenerationError::MissingParaphrase(l.to_string()));
            }
        }
        Ok(())
    }
}

/// Profile keyed by `(ci.age, ci.emotion)`, else the default. Vulnerable-group
/// tags never take part in the choice.
pub fn select_backend<'p>(ci: &CallerImage, profiles: &'p ProfileSet) -> &'p BackendProfile {
    let key = ProfileKey { age: ci.age.clone(), emotion: ci.emotion.clone() };
    profiles.get(&key).unwrap_or(&profiles.default)
}
