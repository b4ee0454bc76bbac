use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{estimate_final_accuracy, RewardError, RewardEstimate};
use crate::backend::{AgentRole, ChatMessage};
use crate::corpus::{Corpus, Task};
use crate::debate::{one_debate_round, with_regenerated_critic, DebateConfig, RoundRecord};
use crate::prompts::{choose_wrong_target, RoleGuidance};
use crate::{pool, seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    TowardBeatsNatural,
    NaturalBeatsAway,
}

/// Which agents a guided branch steers. The other agent stays natural.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRoles {
    #[default]
    Both,
    ActorOnly,
    CriticOnly,
}

impl TargetRoles {
    pub fn includes(self, role: AgentRole) -> bool {
        match self {
            TargetRoles::Both => true,
            TargetRoles::ActorOnly => role == AgentRole::Actor,
            TargetRoles::CriticOnly => role == AgentRole::Critic,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Actor fixed, critic-role pairs emitted.
    #[default]
    CriticPhase,
    /// Critic fixed (typically the tuned one), actor-role pairs emitted.
    ActorPhase,
}

impl Phase {
    pub fn role(self) -> AgentRole {
        match self {
            Phase::CriticPhase => AgentRole::Critic,
            Phase::ActorPhase => AgentRole::Actor,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::CriticPhase => "critic_phase",
            Phase::ActorPhase => "actor_phase",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationPlan {
    pub epsilon: f64,
    pub rollouts: usize,
    /// Rounds to probe; `None` probes every round after the opening one.
    pub rounds_to_probe: Option<BTreeSet<usize>>,
    pub target_roles: TargetRoles,
    pub phase: Phase,
    /// Extra seeds recorded for provenance, e.g. scripted backend seeds.
    pub seeds: BTreeMap<String, u64>,
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan {
            epsilon: 0.2,
            rollouts: 8,
            rounds_to_probe: None,
            target_roles: TargetRoles::Both,
            phase: Phase::CriticPhase,
            seeds: BTreeMap::new(),
        }
    }
}

impl GenerationPlan {
    pub fn validate(&self, total_rounds: usize) -> Result<(), RewardError> {
        let bad = |m: String| Err(RewardError::InvalidPlan(m));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon={} must be positive", self.epsilon));
        }
        if self.rollouts == 0 {
            return bad("rollouts must be at least 1".into());
        }
        if let Some(rounds) = &self.rounds_to_probe {
            if let Some(r) = rounds.iter().find(|&&r| r == 0 || r >= total_rounds) {
                return bad(format!(
                    "round {r} cannot be probed; valid rounds are 1..{total_rounds}"
                ));
            }
        }
        if self.emitted_roles().is_empty() {
            return bad(format!(
                "target_roles={:?} does not cover the {} role of {}",
                self.target_roles,
                self.phase.role().as_str(),
                self.phase.as_str()
            ));
        }
        Ok(())
    }

    pub fn probes(&self, round: usize) -> bool {
        round > 0 && self.rounds_to_probe.as_ref().is_none_or(|r| r.contains(&round))
    }

    /// Roles whose pairs this plan emits: the phase's role, when steered.
    pub fn emitted_roles(&self) -> Vec<AgentRole> {
        let role = self.phase.role();
        if self.target_roles.includes(role) {
            vec![role]
        } else {
            Vec::new()
        }
    }
}

/// Natural, toward-gold and away-from-gold candidates for one round, all
/// extending the same prefix, with their reward estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchTriple {
    pub task_id: String,
    pub round: usize,
    pub base: Vec<RoundRecord>,
    pub natural: RoundRecord,
    pub toward: RoundRecord,
    pub away: RoundRecord,
    pub v: RewardEstimate,
    pub v_plus: RewardEstimate,
    pub v_minus: RewardEstimate,
    pub rollouts: usize,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub role: AgentRole,
    pub task_id: String,
    pub round: usize,
    pub context: Vec<ChatMessage>,
    pub chosen: String,
    pub rejected: String,
    pub delta: f64,
    pub branch_kind: BranchKind,
    pub v: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub rollouts: usize,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct GenerationOutput {
    pub pairs: Vec<PreferencePair>,
    pub triples: Vec<BranchTriple>,
    pub failures: Vec<TaskFailure>,
    pub tasks: usize,
}

fn run_seeds(plan: &GenerationPlan, config: &DebateConfig) -> BTreeMap<String, u64> {
    let mut seeds = plan.seeds.clone();
    seeds.insert("debate".into(), config.seed);
    seeds
}

/// Generates the three candidates for round `prefix.len()` and estimates
/// the reward of each.
pub fn probe_round(
    task: &Task,
    prefix: &[RoundRecord],
    plan: &GenerationPlan,
    config: &DebateConfig,
) -> Result<BranchTriple, RewardError> {
    let t = prefix.len();
    if t == 0 || t >= config.total_rounds {
        return Err(RewardError::InvalidPlan(format!(
            "round {t} cannot be probed with total_rounds={}",
            config.total_rounds
        )));
    }
    let cfg = config.clone().with_keep_prompts(true);
    let natural_g = RoleGuidance::natural();
    let toward_g = RoleGuidance::toward(task.answer_key.clone());
    let wrong = choose_wrong_target(task, seed::derive(config.seed, &[&"away", &task.id, &t]))
        .map_err(|e| RewardError::InvalidPlan(e.to_string()))?;
    let away_g = RoleGuidance::away(wrong);

    let natural = one_debate_round(task, prefix, &natural_g, &natural_g, &cfg)?;
    let guided = |g: &RoleGuidance| match plan.target_roles {
        TargetRoles::Both => one_debate_round(task, prefix, g, g, &cfg),
        TargetRoles::ActorOnly => one_debate_round(task, prefix, g, &natural_g, &cfg),
        TargetRoles::CriticOnly => with_regenerated_critic(task, &natural, g, &cfg),
    };
    let toward = guided(&toward_g)?;
    let away = guided(&away_g)?;

    let estimate = |candidate: &RoundRecord| {
        let mut branch = prefix.to_vec();
        branch.push(candidate.clone());
        estimate_final_accuracy(task, &branch, plan.rollouts, config)
    };
    Ok(BranchTriple {
        task_id: task.id.clone(),
        round: t,
        base: prefix.to_vec(),
        v: estimate(&natural)?,
        v_plus: estimate(&toward)?,
        v_minus: estimate(&away)?,
        natural,
        toward,
        away,
        rollouts: plan.rollouts,
        seeds: run_seeds(plan, config),
    })
}

fn role_text(record: &RoundRecord, role: AgentRole) -> &str {
    match role {
        AgentRole::Actor => &record.actor_text,
        AgentRole::Critic => &record.critic_text,
    }
}

/// Applies the threshold rule to one triple: toward beats natural when
/// its gain reaches `epsilon`, otherwise natural beats away under the same
/// test, otherwise nothing.
pub fn select_pair(triple: &BranchTriple, epsilon: f64, role: AgentRole) -> Option<PreferencePair> {
    let (v, v_plus, v_minus) = (triple.v.value, triple.v_plus.value, triple.v_minus.value);
    let (kind, delta, chosen, rejected) = if v_plus - v >= epsilon {
        (
            BranchKind::TowardBeatsNatural,
            v_plus - v,
            &triple.toward,
            &triple.natural,
        )
    } else if v - v_minus >= epsilon {
        (BranchKind::NaturalBeatsAway, v - v_minus, &triple.natural, &triple.away)
    } else {
        return None;
    };
    let (chosen, rejected) = (role_text(chosen, role), role_text(rejected, role));
    if chosen == rejected {
        tracing::debug!(task = %triple.task_id, round = triple.round, ?role, "skipping pair with identical texts");
        return None;
    }
    let context = match role {
        AgentRole::Actor => triple.natural.actor_prompt.clone(),
        AgentRole::Critic => triple.natural.critic_prompt.clone(),
    }?;
    Some(PreferencePair {
        role,
        task_id: triple.task_id.clone(),
        round: triple.round,
        context,
        chosen: chosen.to_string(),
        rejected: rejected.to_string(),
        delta,
        branch_kind: kind,
        v,
        v_plus,
        v_minus,
        epsilon,
        rollouts: triple.rollouts,
        seeds: triple.seeds.clone(),
    })
}

/// Re-runs selection over recorded triples at a new threshold.
pub fn replay_selection(triples: &[BranchTriple], epsilon: f64, roles: &[AgentRole]) -> Vec<PreferencePair> {
    triples
        .iter()
        .flat_map(|t| roles.iter().filter_map(move |&r| select_pair(t, epsilon, r)))
        .collect()
}

fn generate_for_task(
    task: &Task,
    plan: &GenerationPlan,
    config: &DebateConfig,
) -> Result<(Vec<BranchTriple>, Vec<PreferencePair>), RewardError> {
    let natural = RoleGuidance::natural();
    let roles = plan.emitted_roles();
    let mut rounds = vec![one_debate_round(task, &[], &natural, &natural, config)?];
    let mut triples = Vec::new();
    let mut pairs = Vec::new();
    for t in 1..config.total_rounds {
        let next = if plan.probes(t) {
            let triple = probe_round(task, &rounds, plan, config)?;
            pairs.extend(roles.iter().filter_map(|&r| select_pair(&triple, plan.epsilon, r)));
            let mut next = triple.natural.clone();
            if !config.keep_prompts {
                next.actor_prompt = None;
                next.critic_prompt = None;
            }
            triples.push(triple);
            next
        } else {
            one_debate_round(task, &rounds, &natural, &natural, config)?
        };
        rounds.push(next);
    }
    Ok((triples, pairs))
}

/// Runs the guided-branch search over every task of `corpus`.
///
/// Each task gets a natural debate; at every probed round the three
/// candidates are scored and at most one pair per emitted role is kept.
/// The main debate always continues along the natural candidate. Failing
/// tasks are logged and skipped unless more than 10% fail.
pub fn generate_trajectory_dataset(
    corpus: &Corpus,
    plan: &GenerationPlan,
    config: &DebateConfig,
) -> Result<GenerationOutput, RewardError> {
    config.validate()?;
    plan.validate(config.total_rounds)?;
    if corpus.is_empty() {
        return Err(RewardError::InvalidPlan(format!("corpus `{}` is empty", corpus.name())));
    }
    let results = pool::map(config.max_in_flight, corpus.tasks(), |task| {
        generate_for_task(task, plan, config)
    });

    let mut out = GenerationOutput {
        tasks: corpus.len(),
        ..Default::default()
    };
    for (task, result) in corpus.tasks().iter().zip(results) {
        match result {
            Ok((triples, pairs)) => {
                out.triples.extend(triples);
                out.pairs.extend(pairs);
            }
            Err(e) => {
                tracing::warn!(task = %task.id, error = %e, "task failed during pair generation");
                out.failures.push(TaskFailure {
                    task_id: task.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if out.failures.len() * 10 > out.tasks {
        return Err(RewardError::TooManyFailures {
            failed: out.failures.len(),
            total: out.tasks,
        });
    }
    tracing::info!(
        tasks = out.tasks,
        pairs = out.pairs.len(),
        failed = out.failures.len(),
        "pair generation finished"
    );
    Ok(out)
}
