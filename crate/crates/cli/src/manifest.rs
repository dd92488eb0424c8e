//! Run manifests: everything an annotation run needs, in one TOML/JSON file.
//!
//! Manifests are safe to commit: providers reference credentials by
//! environment-variable name only. Relative paths inside a manifest resolve
//! against the manifest's own directory.

use labelcrew_core::model::MethodConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Which backend a provider entry talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Scripted offline provider; needs `script`.
    Mock,
    /// OpenAI-style `/chat/completions` endpoint.
    Openai,
    /// Anthropic-style `/v1/messages` endpoint.
    Anthropic,
    /// Google-style `:generateContent` endpoint.
    Google,
}

/// One provider the roster can reference. `api_key_env` names an environment
/// variable; the manifest never holds the key itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

fn default_workers() -> usize {
    1
}
fn default_cache() -> bool {
    true
}

/// Retry knobs for transient provider failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrySpec {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetrySpec {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 250 }
    }
}

/// The full description of one annotation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// Task JSON file.
    pub task: PathBuf,
    /// Dataset JSONL file.
    pub dataset: PathBuf,
    /// Defaults to the dataset file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    /// Pricing table (TOML or JSON).
    pub pricing: PathBuf,
    /// Run directories land under here; defaults to `runs` beside the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Response-cache directory; defaults to `cache/` inside the run
    /// directory. Point several manifests at one directory to share it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub cache: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Directory of template override files (`vanilla.txt`, `system.txt`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub retry: Option<RetrySpec>,
    pub method: MethodConfig,
    pub providers: BTreeMap<String, ProviderSpec>,
}

fn run_id_ok(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

fn env_name_ok(name: &str) -> bool {
    !name.is_empty()
        && name.chars().next().map_or(false, |c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl RunManifest {
    /// Parse a TOML (default) or JSON (`.json`) manifest and validate it.
    pub fn load(path: &Path) -> Result<(RunManifest, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest: RunManifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("manifest {}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("manifest {}: {e}", path.display())))?
        };
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        manifest.validate()?;
        Ok((manifest, base))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !run_id_ok(&self.run_id) {
            return Err(CliError::config(format!(
                "run_id {:?} must be non-empty and use only letters, digits, '-', '_', '.'",
                self.run_id
            )));
        }
        self.method
            .validate()
            .map_err(|e| CliError::config(format!("method config: {e}")))?;
        if self.workers == 0 {
            return Err(CliError::config("workers must be at least 1"));
        }
        for agent in &self.method.agent_roster {
            if !self.providers.contains_key(&agent.provider_id) {
                return Err(CliError::config(format!(
                    "agent {:?} references undeclared provider {:?}",
                    agent.agent_id, agent.provider_id
                )));
            }
        }
        for (id, spec) in &self.providers {
            match spec.kind {
                ProviderKind::Mock => {
                    if spec.script.is_none() {
                        return Err(CliError::config(format!(
                            "mock provider {id:?} needs a script path"
                        )));
                    }
                    if spec.api_key_env.is_some() {
                        return Err(CliError::config(format!(
                            "mock provider {id:?} takes no credentials"
                        )));
                    }
                }
                ProviderKind::Openai | ProviderKind::Anthropic | ProviderKind::Google => {
                    let Some(env) = &spec.api_key_env else {
                        return Err(CliError::config(format!(
                            "provider {id:?} needs api_key_env (the name of the environment variable holding the key)"
                        )));
                    };
                    if !env_name_ok(env) {
                        return Err(CliError::config(format!(
                            "provider {id:?}: api_key_env {env:?} is not an environment-variable name; never put the key itself in a manifest"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolve a manifest-relative path.
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn dataset_id(&self) -> String {
        self.dataset_id.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }

    pub fn run_dir(&self, base: &Path) -> PathBuf {
        let out = self
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs"));
        self.resolve(base, &out).join(&self.run_id)
    }

    pub fn cache_dir(&self, base: &Path) -> PathBuf {
        match &self.cache_dir {
            Some(dir) => self.resolve(base, dir),
            None => self.run_dir(base).join("cache"),
        }
    }
}
