//! Two-agent debate protocol.
//!
//! Round `t` is one actor turn followed by one critic turn. The opening
//! actor turn sees only the task; every later actor turn sees the task plus
//! the immediately preceding actor response and critic feedback. The critic
//! always sees the task and the actor's response from the same round.

mod extract;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::extract_answer;

use crate::backend::{generate, AgentRole, Backend, BackendError, ChatMessage, GenerationRequest};
use crate::corpus::{Answer, Task};
use crate::prompts::{PromptError, PromptKit, RoleGuidance};
use crate::seed;

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("task `{task_id}` round {round}: {role:?} backend failed: {source}")]
    Backend {
        task_id: String,
        round: usize,
        role: AgentRole,
        #[source]
        source: BackendError,
    },
    #[error("task `{task_id}` round {round}: {source}")]
    Prompt {
        task_id: String,
        round: usize,
        #[source]
        source: PromptError,
    },
    #[error("invalid debate configuration: {0}")]
    InvalidConfig(String),
    #[error("task `{task_id}`: prefix of {len} round(s) cannot be resumed with total_rounds={total}")]
    InvalidPrefix { task_id: String, len: usize, total: usize },
    #[error("trajectory file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct DebateConfig {
    /// Number of rounds T+1; rounds are indexed 0..total_rounds.
    pub total_rounds: usize,
    pub actor: Arc<dyn Backend>,
    pub critic: Arc<dyn Backend>,
    pub temperature: f64,
    /// Temperature for Monte-Carlo roll-outs.
    pub rollout_temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// Store rendered prompts on every round record.
    pub keep_prompts: bool,
    /// Upper bound on concurrently outstanding generations.
    pub max_in_flight: usize,
    pub prompts: Arc<PromptKit>,
}

impl std::fmt::Debug for DebateConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DebateConfig")
            .field("total_rounds", &self.total_rounds)
            .field("actor", &self.actor.id())
            .field("critic", &self.critic.id())
            .field("temperature", &self.temperature)
            .field("rollout_temperature", &self.rollout_temperature)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl DebateConfig {
    pub fn new(actor: Arc<dyn Backend>, critic: Arc<dyn Backend>) -> Self {
        DebateConfig {
            total_rounds: 5,
            actor,
            critic,
            temperature: 0.7,
            rollout_temperature: 1.0,
            max_tokens: 512,
            seed: 0,
            keep_prompts: false,
            max_in_flight: 8,
            prompts: Arc::new(PromptKit::default()),
        }
    }

    pub fn with_rounds(mut self, total_rounds: usize) -> Self {
        self.total_rounds = total_rounds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_keep_prompts(mut self, keep: bool) -> Self {
        self.keep_prompts = keep;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n;
        self
    }

    pub fn validate(&self) -> Result<(), DebateError> {
        if self.total_rounds == 0 {
            return Err(DebateError::InvalidConfig("total_rounds must be at least 1".into()));
        }
        for (name, t) in [
            ("temperature", self.temperature),
            ("rollout_temperature", self.rollout_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(DebateError::InvalidConfig(format!("{name}={t} outside [0, 2]")));
            }
        }
        if self.max_in_flight == 0 {
            return Err(DebateError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(DebateError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            total_rounds: self.total_rounds,
            temperature: self.temperature,
            seed: self.seed,
            actor_backend: self.actor.id().to_string(),
            critic_backend: self.critic.id().to_string(),
        }
    }

    /// Copy used for roll-outs: its own seed stream and roll-out temperature.
    pub(crate) fn for_rollout(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.temperature = self.rollout_temperature;
        c.keep_prompts = false;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub total_rounds: usize,
    pub temperature: f64,
    pub seed: u64,
    pub actor_backend: String,
    pub critic_backend: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: usize,
    pub actor_text: String,
    pub critic_text: String,
    pub actor_answer: Answer,
    pub actor_guidance: RoleGuidance,
    pub critic_guidance: RoleGuidance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_prompt: Option<Vec<ChatMessage>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_prompt: Option<Vec<ChatMessage>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub rounds: Vec<RoundRecord>,
    pub config: ConfigSnapshot,
}

impl Trajectory {
    pub fn final_answer(&self) -> Option<&Answer> {
        self.rounds.last().map(|r| &r.actor_answer)
    }

    /// Per-round actor correctness; unparseable counts as incorrect.
    pub fn correctness(&self, task: &Task) -> Vec<bool> {
        self.rounds
            .iter()
            .map(|r| r.actor_answer.is_correct(&task.answer_key))
            .collect()
    }
}

fn role_seed(config: &DebateConfig, task: &Task, round: usize, role: AgentRole, guidance: &RoleGuidance) -> u64 {
    seed::derive(
        config.seed,
        &[&task.id, &round, &role.as_str(), &guidance.mode.to_string()],
    )
}

/// Generates round `prefix.len()` given the rounds before it.
pub fn one_debate_round(
    task: &Task,
    prefix: &[RoundRecord],
    actor_guidance: &RoleGuidance,
    critic_guidance: &RoleGuidance,
    config: &DebateConfig,
) -> Result<RoundRecord, DebateError> {
    let t = prefix.len();
    let prompt_err = |source| DebateError::Prompt {
        task_id: task.id.clone(),
        round: t,
        source,
    };
    let backend_err = |role, source| DebateError::Backend {
        task_id: task.id.clone(),
        round: t,
        role,
        source,
    };

    let prior = prefix.last().map(|r| (r.actor_text.as_str(), r.critic_text.as_str()));
    let actor_prompt = config
        .prompts
        .render_actor_prompt(task, prior, actor_guidance)
        .map_err(prompt_err)?;
    // validate the critic guidance before spending a generation on the actor
    critic_guidance.validated_target(task).map_err(prompt_err)?;

    let actor_req = GenerationRequest::new(actor_prompt.clone())
        .with_temperature(config.temperature)
        .with_max_tokens(config.max_tokens)
        .with_seed(role_seed(config, task, t, AgentRole::Actor, actor_guidance));
    let actor_text = generate(config.actor.as_ref(), &actor_req)
        .map_err(|e| backend_err(AgentRole::Actor, e))?
        .text;

    let (critic_text, critic_prompt) = critic_turn(task, t, &actor_text, critic_guidance, config)?;

    let keep = config.keep_prompts;
    Ok(RoundRecord {
        index: t,
        actor_answer: extract_answer(&actor_text, task.kind),
        actor_text,
        critic_text,
        actor_guidance: actor_guidance.clone(),
        critic_guidance: critic_guidance.clone(),
        actor_prompt: keep.then_some(actor_prompt),
        critic_prompt: keep.then_some(critic_prompt),
    })
}

/// One critic turn at round `round` answering `actor_text`.
pub fn critic_turn(
    task: &Task,
    round: usize,
    actor_text: &str,
    guidance: &RoleGuidance,
    config: &DebateConfig,
) -> Result<(String, Vec<ChatMessage>), DebateError> {
    let prompt = config
        .prompts
        .render_critic_prompt(task, actor_text, guidance)
        .map_err(|source| DebateError::Prompt {
            task_id: task.id.clone(),
            round,
            source,
        })?;
    let req = GenerationRequest::new(prompt.clone())
        .with_temperature(config.temperature)
        .with_max_tokens(config.max_tokens)
        .with_seed(role_seed(config, task, round, AgentRole::Critic, guidance));
    let text = generate(config.critic.as_ref(), &req)
        .map_err(|source| DebateError::Backend {
            task_id: task.id.clone(),
            round,
            role: AgentRole::Critic,
            source,
        })?
        .text;
    Ok((text, prompt))
}

/// Copy of `record` whose critic turn is regenerated under `guidance`,
/// keeping the actor turn as is.
pub fn with_regenerated_critic(
    task: &Task,
    record: &RoundRecord,
    guidance: &RoleGuidance,
    config: &DebateConfig,
) -> Result<RoundRecord, DebateError> {
    let (critic_text, prompt) = critic_turn(task, record.index, &record.actor_text, guidance, config)?;
    Ok(RoundRecord {
        critic_text,
        critic_guidance: guidance.clone(),
        critic_prompt: config.keep_prompts.then_some(prompt),
        ..record.clone()
    })
}

/// Runs a natural debate for exactly `total_rounds` rounds.
pub fn run_debate(task: &Task, config: &DebateConfig) -> Result<Trajectory, DebateError> {
    config.validate()?;
    let rounds = continue_naturally(task, Vec::new(), config)?;
    Ok(Trajectory {
        task_id: task.id.clone(),
        rounds,
        config: config.snapshot(),
    })
}

/// Continues a partial debate naturally to `total_rounds`; the given
/// prefix is copied unchanged into the result.
pub fn resume_debate(task: &Task, partial: &[RoundRecord], config: &DebateConfig) -> Result<Trajectory, DebateError> {
    config.validate()?;
    if partial.is_empty() || partial.len() >= config.total_rounds {
        return Err(DebateError::InvalidPrefix {
            task_id: task.id.clone(),
            len: partial.len(),
            total: config.total_rounds,
        });
    }
    let rounds = continue_naturally(task, partial.to_vec(), config)?;
    Ok(Trajectory {
        task_id: task.id.clone(),
        rounds,
        config: config.snapshot(),
    })
}

fn continue_naturally(
    task: &Task,
    mut rounds: Vec<RoundRecord>,
    config: &DebateConfig,
) -> Result<Vec<RoundRecord>, DebateError> {
    let natural = RoleGuidance::natural();
    while rounds.len() < config.total_rounds {
        let next = one_debate_round(task, &rounds, &natural, &natural, config)?;
        rounds.push(next);
    }
    Ok(rounds)
}

pub fn write_trajectories<'a>(
    writer: impl Write,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Result<(), DebateError> {
    let mut out = BufWriter::new(writer);
    for t in trajectories {
        serde_json::to_writer(&mut out, t).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trajectories(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<(), DebateError> {
    write_trajectories(File::create(path)?, trajectories)
}

pub fn read_trajectories(reader: impl BufRead) -> Result<Vec<Trajectory>, DebateError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| DebateError::Format {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let contiguous = t.rounds.iter().enumerate().all(|(i, r)| r.index == i);
        if !contiguous || t.rounds.len() > t.config.total_rounds {
            return Err(DebateError::Format {
                line: i + 1,
                reason: "round indices must be contiguous from 0 and within total_rounds".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, DebateError> {
    read_trajectories(BufReader::new(File::open(path)?))
}
