//! Service configuration file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store = "sessions"
//! instructor_token_env = "CALLSIM_INSTRUCTOR_TOKEN"
//!
//! [data]
//! corpus = "corpus.jsonl"
//! gazetteer = "gazetteer.txt"
//! map = "map.toml"
//! protocols = "protocols.toml"
//!
//! [backend]
//! kind = "remote"
//! endpoint = "https://llm.example/v1/chat/completions"
//! model = "some-model"
//! api_key_env = "CALLSIM_API_KEY"
//!
//! [validation]
//! threshold = 3
//! ```
//!
//! Secrets never appear in the file itself, only the names of the
//! environment variables that hold them.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use callsim::engine::{config_dir, read_config, BackendConfig, DataPaths, Engine};
use callsim::validation::ValidationConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Directory of per-session event files.
    #[serde(default = "default_store")]
    pub store: PathBuf,
    /// Environment variable holding the instructor token. Instructor export
    /// is disabled when unset.
    #[serde(default)]
    pub instructor_token_env: Option<String>,
    /// Ablation row used for new sessions unless the request names one.
    #[serde(default = "default_ablation")]
    pub ablation: String,
    pub data: DataPaths,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_store() -> PathBuf {
    PathBuf::from("sessions")
}

fn default_ablation() -> String {
    "full".into()
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_config(path)?;
        let mut config = Self::from_toml(&text).with_context(|| format!("reading {}", path.display()))?;
        config.base_dir = config_dir(path);
        config.data.resolve(&config.base_dir);
        if config.store.is_relative() {
            config.store = config.base_dir.join(&config.store);
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        if callsim::Ablation::from_row_name(&config.ablation).is_none() {
            anyhow::bail!("unknown ablation row {:?}", config.ablation);
        }
        Ok(config)
    }

    pub fn engine(&self) -> Result<Engine> {
        let client = self.backend.build(&self.base_dir)?;
        Ok(Engine::load(&self.data, client, self.validation)?)
    }

    /// Reads the instructor token from the configured variable.
    pub fn instructor_token(&self) -> Option<String> {
        let var = self.instructor_token_env.as_deref()?;
        std::env::var(var).ok().filter(|t| !t.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "[data]\ncorpus = \"c\"\ngazetteer = \"g\"\nmap = \"m\"\nprotocols = \"p\"\n";

    #[test]
    fn defaults_and_rejections() {
        let c = ServiceConfig::from_toml(MIN).unwrap();
        assert_eq!(c.listen.port(), 8080);
        assert_eq!(c.ablation, "full");
        assert_eq!(c.backend, BackendConfig::RuleBased { fault_rate: 0.0 });
        assert!(ServiceConfig::from_toml(&format!("ablation = \"no-x\"\n{MIN}")).is_err());
        assert!(ServiceConfig::from_toml(&format!("api_key = \"sk-123\"\n{MIN}")).is_err());
    }
}
