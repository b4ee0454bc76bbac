//! Deterministic synthetic actor/critic.
//!
//! The agent reads the same rendered prompts a remote model would see,
//! recovers the task from the question line, and answers according to four
//! probabilities:
//!
//! * actor, opening turn: correct with probability `p0`;
//! * actor, later turns: keeps its previous answer when the critic's last
//!   feedback agreed with it, otherwise switches to the critic's answer with
//!   probability `s`;
//! * critic: advocates the gold answer with probability `c`, else a wrong
//!   one (the actor's own answer when that is already wrong);
//! * under guidance either role emits the guided target with probability
//!   `guided_compliance`, falling back to the natural behaviour otherwise.
//!
//! Correctness of the actor therefore follows a two-state Markov chain with
//! P(correct → incorrect) = (1 − c)·s and P(incorrect → correct) = c·s per
//! critic turn. Responses embed `Final Answer: X` so extraction runs on the
//! same path as for model text.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ChatMessage, GenerationRequest, GenerationResult};
use crate::corpus::{Answer, AnswerKey, Corpus, Task, TaskKind};
use crate::debate::extract_answer;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Actor,
    Critic,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Actor => "actor",
            AgentRole::Critic => "critic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedAgentParams {
    pub p0: f64,
    pub s: f64,
    pub c: f64,
    pub guided_compliance: f64,
    pub seed: u64,
}

impl Default for ScriptedAgentParams {
    fn default() -> Self {
        ScriptedAgentParams {
            p0: 0.6,
            s: 0.5,
            c: 0.7,
            guided_compliance: 1.0,
            seed: 0,
        }
    }
}

impl ScriptedAgentParams {
    pub fn new(p0: f64, s: f64, c: f64) -> Self {
        ScriptedAgentParams {
            p0,
            s,
            c,
            ..Default::default()
        }
    }

    pub fn with_compliance(mut self, guided_compliance: f64) -> Self {
        self.guided_compliance = guided_compliance;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (name, v) in [
            ("p0", self.p0),
            ("s", self.s),
            ("c", self.c),
            ("guided_compliance", self.guided_compliance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::Config(format!("{name}={v} is not a probability")));
            }
        }
        Ok(())
    }
}

fn question_key(question: &str) -> String {
    question
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .trim_end_matches('?')
        .trim_end()
        .to_string()
}

/// Tasks the scripted agent can recognise, keyed by question line.
#[derive(Clone, Debug, Default)]
pub struct TaskRegistry {
    by_question: HashMap<String, Vec<Task>>,
}

impl TaskRegistry {
    pub fn new<'a>(tasks: impl IntoIterator<Item = &'a Task>) -> Self {
        let mut by_question: HashMap<String, Vec<Task>> = HashMap::new();
        for task in tasks {
            by_question
                .entry(question_key(&task.question))
                .or_default()
                .push(task.clone());
        }
        TaskRegistry { by_question }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(corpus.tasks())
    }

    fn lookup(&self, prompt: &str) -> Option<&Task> {
        let start = prompt.find("\nQuestion: ")? + "\nQuestion: ".len();
        let line = prompt[start..].lines().next().unwrap_or("");
        let candidates = self.by_question.get(&question_key(line))?;
        match candidates.as_slice() {
            [only] => Some(only),
            many => many
                .iter()
                .find(|t| t.passage.as_deref().is_none_or(|p| prompt.contains(p)))
                .or(many.first()),
        }
    }
}

/// Sequence scores for the scripted backend: an exact table keyed by
/// (context hash, target), falling back to a per-token sum over
/// whitespace-separated tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedScorer {
    pub sequences: HashMap<(u64, String), f64>,
    pub tokens: HashMap<String, f64>,
    pub default_token_logprob: f64,
}

impl Default for ScriptedScorer {
    fn default() -> Self {
        ScriptedScorer {
            sequences: HashMap::new(),
            tokens: HashMap::new(),
            default_token_logprob: -1.0,
        }
    }
}

impl ScriptedScorer {
    pub fn context_hash(context: &[ChatMessage]) -> u64 {
        seed::content_hash(&GenerationRequest::new(context.to_vec()).content_fingerprint())
    }

    pub fn with_sequence(mut self, context: &[ChatMessage], target: &str, logprob: f64) -> Self {
        self.sequences
            .insert((Self::context_hash(context), target.to_string()), logprob);
        self
    }

    pub fn with_token(mut self, token: &str, logprob: f64) -> Self {
        self.tokens.insert(token.to_string(), logprob);
        self
    }

    pub fn score(&self, context: &[ChatMessage], target: &str) -> f64 {
        if let Some(v) = self.sequences.get(&(Self::context_hash(context), target.to_string())) {
            return *v;
        }
        target
            .split_whitespace()
            .map(|tok| *self.tokens.get(tok).unwrap_or(&self.default_token_logprob))
            .sum()
    }
}

/// Actor and critic handles, in that order.
pub type Team = (Arc<dyn Backend>, Arc<dyn Backend>);

pub struct ScriptedBackend {
    id: String,
    role: AgentRole,
    params: ScriptedAgentParams,
    registry: Arc<TaskRegistry>,
    scorer: ScriptedScorer,
}

impl ScriptedBackend {
    pub fn new(
        role: AgentRole,
        params: ScriptedAgentParams,
        registry: Arc<TaskRegistry>,
    ) -> Result<Self, BackendError> {
        params.validate()?;
        let id = format!(
            "scripted-{}(p0={},s={},c={},g={},seed={})",
            role.as_str(),
            params.p0,
            params.s,
            params.c,
            params.guided_compliance,
            params.seed
        );
        Ok(ScriptedBackend {
            id,
            role,
            params,
            registry,
            scorer: ScriptedScorer::default(),
        })
    }

    /// Actor and critic handles sharing one parameter set and registry.
    pub fn team(params: ScriptedAgentParams, registry: Arc<TaskRegistry>) -> Result<Team, BackendError> {
        Ok((
            Arc::new(ScriptedBackend::new(AgentRole::Actor, params, registry.clone())?),
            Arc::new(ScriptedBackend::new(AgentRole::Critic, params, registry)?),
        ))
    }

    pub fn with_scorer(mut self, scorer: ScriptedScorer) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn role(&self) -> AgentRole {
        self.role
    }

    pub fn params(&self) -> &ScriptedAgentParams {
        &self.params
    }

    fn rng_for(&self, request: &GenerationRequest) -> ChaCha8Rng {
        let content = seed::content_hash(&request.content_fingerprint());
        ChaCha8Rng::seed_from_u64(seed::derive(
            self.params.seed,
            &[&self.role.as_str(), &content, &request.seed.unwrap_or(0)],
        ))
    }

    fn respond(&self, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let Some(task) = self.registry.lookup(prompt) else {
            return "I am not sure how to answer this question.".into();
        };
        match self.role {
            AgentRole::Actor => self.act(task, prompt, rng),
            AgentRole::Critic => self.critique(task, prompt, rng),
        }
    }

    fn act(&self, task: &Task, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let debate = parse_debate_block(prompt);
        let instructions = match &debate {
            Some(block) => &prompt[block.end..],
            None => prompt,
        };
        let instructions = instructions.split("\nQuestion: ").next().unwrap_or("");
        if let Some(target) = guided_target(instructions, "your final answer is ", task) {
            if rng.random_bool(self.params.guided_compliance) {
                return format!(
                    "The passage supports {}. Final Answer: {}",
                    render(task, &target),
                    render(task, &target)
                );
            }
        }
        let Some(block) = debate else {
            let answer = if rng.random_bool(self.params.p0) {
                task.answer_key.clone()
            } else {
                wrong_answer(task, None, rng)
            };
            let tok = render(task, &answer);
            return format!("Based on the passage, I believe the answer is {tok}. Final Answer: {tok}");
        };
        let previous = extract_answer(block.actor, task.kind);
        let advocated = extract_answer(block.critic, task.kind);
        let answer = match (previous, advocated) {
            (Answer::Key(prev), Answer::Key(adv)) if prev != adv => {
                if rng.random_bool(self.params.s) {
                    let tok = render(task, &adv);
                    return format!(
                        "Having considered the other responses, I now think the answer is {tok}. Final Answer: {tok}"
                    );
                }
                prev
            }
            (Answer::Key(prev), _) => prev,
            (Answer::Unparseable, Answer::Key(adv)) => adv,
            (Answer::Unparseable, Answer::Unparseable) => {
                if rng.random_bool(self.params.p0) {
                    task.answer_key.clone()
                } else {
                    wrong_answer(task, None, rng)
                }
            }
        };
        let tok = render(task, &answer);
        format!("Having considered the other responses, I maintain my answer of {tok}. Final Answer: {tok}")
    }

    fn critique(&self, task: &Task, prompt: &str, rng: &mut ChaCha8Rng) -> String {
        let (instructions, actor_text) = match prompt.rsplit_once("\nMy Response: ") {
            Some((head, tail)) => (head, tail),
            None => (prompt, ""),
        };
        let instructions = instructions.split("\nQuestion: ").next().unwrap_or("");
        let actor_answer = extract_answer(actor_text, task.kind);
        let advocated = guided_target(instructions, "the correct answer is ", task)
            .filter(|_| rng.random_bool(self.params.guided_compliance))
            .unwrap_or_else(|| {
                if rng.random_bool(self.params.c) {
                    task.answer_key.clone()
                } else {
                    wrong_answer(task, actor_answer.key(), rng)
                }
            });
        let tok = render(task, &advocated);
        if actor_answer.key() == Some(&advocated) {
            format!("Your response is correct. The details support {tok}. Final Answer: {tok}")
        } else {
            format!("Details refuting your response: the passage points to {tok} instead. Final Answer: {tok}")
        }
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let prompt = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == super::ChatRole::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let mut rng = self.rng_for(request);
        Ok(GenerationResult {
            text: self.respond(prompt, &mut rng),
            token_logprobs: None,
            backend_id: self.id.clone(),
        })
    }

    fn score(&self, context: &[ChatMessage], target: &str) -> Result<f64, BackendError> {
        Ok(self.scorer.score(context, target))
    }
}

struct DebateBlock<'a> {
    actor: &'a str,
    critic: &'a str,
    end: usize,
}

fn parse_debate_block(prompt: &str) -> Option<DebateBlock<'_>> {
    const P1: &str = "Person 1 said: ";
    const P2: &str = "\nPerson 2 said: ";
    const TAIL: &str = "You should take these answers";
    let a_start = prompt.find(P1)? + P1.len();
    let a_len = prompt[a_start..].find(P2)?;
    let c_start = a_start + a_len + P2.len();
    let c_len = prompt[c_start..].find(TAIL)?;
    Some(DebateBlock {
        actor: &prompt[a_start..a_start + a_len],
        critic: prompt[c_start..c_start + c_len].trim_end(),
        end: c_start + c_len,
    })
}

fn guided_target(instructions: &str, marker: &str, task: &Task) -> Option<AnswerKey> {
    let at = instructions.rfind(marker)? + marker.len();
    let token = instructions[at..].split(['.', ',', '\n']).next()?;
    crate::corpus::normalize_answer(token, task.kind)
        .key()
        .filter(|k| task.answer_space().contains(k))
        .cloned()
}

fn wrong_answer(task: &Task, prefer: Option<&AnswerKey>, rng: &mut ChaCha8Rng) -> AnswerKey {
    if let Some(p) = prefer.filter(|p| **p != task.answer_key) {
        return p.clone();
    }
    let wrong: Vec<AnswerKey> = task
        .answer_space()
        .into_iter()
        .filter(|k| *k != task.answer_key)
        .collect();
    wrong.choose(rng).cloned().unwrap_or_else(|| task.answer_key.clone())
}

fn render(task: &Task, key: &AnswerKey) -> String {
    match task.kind {
        TaskKind::YesNo => key.display_token(),
        TaskKind::MultiChoice => {
            let text = key
                .choice_index()
                .and_then(|i| task.choices.get(i))
                .map(|c| c.text.as_str());
            match text {
                Some(t) => format!("{} {t}", key.display_token()),
                None => key.display_token(),
            }
        }
    }
}
