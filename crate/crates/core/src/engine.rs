//! Loading the full set of engine dependencies from a configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::copilot::{train_centroid_classifier, CentroidModel, CopilotError, LexicalAnswerer};
use crate::corpus::{parse_corpus, AnnotatedCall, CorpusError, TagTaxonomy};
use crate::generation::{
    BackendClient, ChatCompletionClient, GenerationConfig, GenerationError, ProfileSet, RemoteBackendConfig,
    RuleBasedBackend, ScriptedBackend,
};
use crate::knowledge::{build_knowledge, KnowledgeError, KnowledgeSet};
use crate::validation::{LoopDeps, ValidationConfig};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config file {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Copilot(#[from] CopilotError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

/// File locations of the engine's data. Relative paths resolve against the
/// directory of the file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Tag taxonomy; the bundled default when absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    pub corpus: PathBuf,
    pub gazetteer: PathBuf,
    pub map: PathBuf,
    pub protocols: PathBuf,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    #[serde(default)]
    pub questions: Option<PathBuf>,
    /// Pre-trained classifier; trained from the corpus when absent.
    #[serde(default)]
    pub classifier: Option<PathBuf>,
}

impl DataPaths {
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.corpus, &mut self.gazetteer, &mut self.map, &mut self.protocols] {
            fix(p);
        }
        for p in
            [&mut self.taxonomy, &mut self.profiles, &mut self.questions, &mut self.classifier].into_iter().flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Deterministic offline backend with an optional injected fault rate.
    RuleBased {
        #[serde(default)]
        fault_rate: f64,
    },
    /// Replays a JSON script of responses.
    Scripted { script: PathBuf },
    /// OpenAI-style chat-completions endpoint.
    Remote(RemoteBackendConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::RuleBased { fault_rate: 0.0 }
    }
}

impl BackendConfig {
    pub fn build(&self, base: &Path) -> Result<Box<dyn BackendClient>, EngineError> {
        Ok(match self {
            BackendConfig::RuleBased { fault_rate } => Box::new(RuleBasedBackend::new(*fault_rate)),
            BackendConfig::Scripted { script } => Box::new(ScriptedBackend::load(&base.join(script))?),
            BackendConfig::Remote(c) => Box::new(ChatCompletionClient::new(c.clone())),
        })
    }
}

/// Everything a session needs, shared read-only across sessions.
pub struct Engine {
    pub corpus: Vec<AnnotatedCall>,
    pub knowledge: KnowledgeSet,
    pub classifier: CentroidModel,
    pub answerer: LexicalAnswerer,
    pub profiles: ProfileSet,
    pub client: Box<dyn BackendClient>,
    pub validation: ValidationConfig,
    pub generation: GenerationConfig,
}

impl Engine {
    /// Loads data files and trains (or loads) the classifier. `paths` must
    /// already be resolved.
    pub fn load(
        paths: &DataPaths,
        client: Box<dyn BackendClient>,
        validation: ValidationConfig,
    ) -> Result<Self, EngineError> {
        let taxonomy = match &paths.taxonomy {
            Some(p) => TagTaxonomy::load(p)?,
            None => TagTaxonomy::bundled(),
        };
        let corpus = parse_corpus(&paths.corpus, &taxonomy)?;
        let knowledge = build_knowledge(&corpus, taxonomy, &paths.gazetteer, &paths.map, &paths.protocols)?;
        let classifier = match &paths.classifier {
            Some(p) => CentroidModel::load(p)?,
            None => train_centroid_classifier(&corpus)?,
        };
        let answerer = match &paths.questions {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| EngineError::Config { path: p.display().to_string(), message: e.to_string() })?;
                LexicalAnswerer::from_toml(&text)?
            }
            None => LexicalAnswerer::bundled(),
        }
        .with_gazetteer(knowledge.gazetteer.clone());
        let profiles = match &paths.profiles {
            Some(p) => ProfileSet::load(p)?,
            None => ProfileSet::bundled(),
        };
        profiles.check_paraphrases(&knowledge.taxonomy)?;
        Ok(Self {
            corpus,
            knowledge,
            classifier,
            answerer,
            profiles,
            client,
            validation,
            generation: GenerationConfig::default(),
        })
    }

    pub fn deps<'a>(&'a self, clock: &'a dyn Clock) -> LoopDeps<'a> {
        LoopDeps {
            client: self.client.as_ref(),
            knowledge: &self.knowledge,
            classifier: &self.classifier,
            answerer: &self.answerer,
            profiles: &self.profiles,
            config: self.validation,
            clock,
        }
    }

    /// Same engine with a different backend.
    pub fn with_client(mut self, client: Box<dyn BackendClient>) -> Self {
        self.client = client;
        self
    }
}

pub fn read_config(path: &Path) -> Result<String, EngineError> {
    std::fs::read_to_string(path)
        .map_err(|e| EngineError::Config { path: path.display().to_string(), message: e.to_string() })
}

pub fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
