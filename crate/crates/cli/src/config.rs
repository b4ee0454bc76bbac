//! TOML run configuration and backend construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use debate_core::backend::RetryPolicy;
use debate_core::corpus::{FieldMap, SourceFormat};
use debate_core::reward::GenerationPlan;
use debate_core::{
    AgentRole, Backend, Corpus, DebateConfig, DpoParams, PromptKit, RemoteBackend, RemoteConfig, ScriptedAgentParams,
    ScriptedBackend, TaskRegistry,
};
use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "DEBATE_API_KEY";
pub const FALLBACK_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the auth token.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub logprobs: bool,
    pub scoring: bool,
}

impl Default for BackendSpec {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        BackendSpec {
            kind: BackendKind::Scripted,
            endpoint: remote.endpoint,
            model: remote.model,
            api_key_env: None,
            timeout_secs: remote.timeout_secs,
            retry: remote.retry,
            logprobs: false,
            scoring: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebateSection {
    pub rounds: usize,
    pub temperature: f64,
    pub rollout_temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    pub seed: u64,
    pub keep_prompts: bool,
    /// Directory overriding the built-in prompt templates.
    pub templates: Option<PathBuf>,
}

impl Default for DebateSection {
    fn default() -> Self {
        DebateSection {
            rounds: 5,
            temperature: 0.7,
            rollout_temperature: 1.0,
            max_tokens: 512,
            max_in_flight: 8,
            seed: 0,
            keep_prompts: false,
            templates: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub format: Option<SourceFormat>,
    pub fields: FieldMap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub actor: BackendSpec,
    pub critic: BackendSpec,
    /// Backends used by `loss score`; default to actor and critic settings.
    pub policy: Option<BackendSpec>,
    pub reference: Option<BackendSpec>,
    pub scripted: ScriptedAgentParams,
    pub debate: DebateSection,
    pub generation: GenerationPlan,
    pub dpo: DpoParams,
    pub corpus: CorpusSection,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set_backend_kind(&mut self, kind: BackendKind) {
        self.actor.kind = kind;
        self.critic.kind = kind;
    }

    /// Debate settings with actor and critic built for `corpus`.
    pub fn debate_config(&self, corpus: &Corpus) -> Result<DebateConfig> {
        let registry = Arc::new(TaskRegistry::from_corpus(corpus));
        let actor = self.backend(&self.actor, AgentRole::Actor, &registry)?;
        let critic = self.backend(&self.critic, AgentRole::Critic, &registry)?;
        self.debate_config_with(actor, critic)
    }

    pub fn debate_config_with(&self, actor: Arc<dyn Backend>, critic: Arc<dyn Backend>) -> Result<DebateConfig> {
        let d = &self.debate;
        let mut cfg = DebateConfig::new(actor, critic)
            .with_rounds(d.rounds)
            .with_seed(d.seed)
            .with_keep_prompts(d.keep_prompts)
            .with_max_in_flight(d.max_in_flight);
        cfg.temperature = d.temperature;
        cfg.rollout_temperature = d.rollout_temperature;
        cfg.max_tokens = d.max_tokens;
        if let Some(dir) = &d.templates {
            cfg.prompts = Arc::new(
                PromptKit::from_dir(dir).with_context(|| format!("loading templates from {}", dir.display()))?,
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backend(
        &self,
        spec: &BackendSpec,
        role: AgentRole,
        registry: &Arc<TaskRegistry>,
    ) -> Result<Arc<dyn Backend>> {
        Ok(match spec.kind {
            BackendKind::Scripted => Arc::new(ScriptedBackend::new(role, self.scripted, registry.clone())?),
            BackendKind::Remote => Arc::new(RemoteBackend::new(RemoteConfig {
                endpoint: spec.endpoint.clone(),
                model: spec.model.clone(),
                api_key: api_key(spec.api_key_env.as_deref())?,
                timeout_secs: spec.timeout_secs,
                retry: spec.retry.clone(),
                logprobs: spec.logprobs,
                scoring: spec.scoring,
            })?),
        })
    }
}

/// Reads the auth token from the configured variable, or from the default
/// variables when none is configured. A configured but unset variable is
/// an error.
fn api_key(var: Option<&str>) -> Result<Option<String>> {
    match var {
        Some(name) => match std::env::var(name) {
            Ok(v) => Ok(Some(v)),
            Err(_) => bail!("environment variable {name} named by api_key_env is not set"),
        },
        None => Ok(std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var(FALLBACK_API_KEY_ENV))
            .ok()),
    }
}
