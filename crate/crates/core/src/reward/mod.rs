//! Partial-trajectory rewards and preference-pair generation.
//!
//! The reward of a debate prefix is the probability that a debate resumed
//! from it ends with the correct final actor answer, estimated by running
//! independent natural continuations.

mod dataset;
mod pairs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ScriptedAgentParams;
use crate::corpus::Task;
use crate::debate::{resume_debate, DebateConfig, DebateError, RoundRecord};
use crate::{pool, seed};

pub use dataset::{
    load_triples, phase_dataset_path, phase_marker_path, read_dataset, run_best_response_phases, run_phase,
    save_triples, write_dataset, DatasetHeader, PhaseOutcome, DATASET_FORMAT,
};
pub use pairs::{
    generate_trajectory_dataset, probe_round, replay_selection, select_pair, BranchKind, BranchTriple,
    GenerationOutput, GenerationPlan, Phase, PreferencePair, TargetRoles, TaskFailure,
};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error("task `{task_id}`: only {completed} of {requested} roll-outs completed: {last_error}")]
    PartialEstimate {
        task_id: String,
        completed: usize,
        requested: usize,
        last_error: String,
    },
    #[error("invalid generation plan: {0}")]
    InvalidPlan(String),
    #[error("{failed} of {total} tasks failed, above the 10% limit")]
    TooManyFailures { failed: usize, total: usize },
    #[error("dataset line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimate {
    /// Fraction of completed roll-outs ending correct.
    pub value: f64,
    /// Completed roll-outs the value is based on.
    pub samples: usize,
    pub stderr: f64,
    /// Roll-outs that failed and were excluded.
    #[serde(default)]
    pub failed: usize,
}

impl RewardEstimate {
    pub fn from_counts(correct: usize, samples: usize, failed: usize) -> Self {
        let value = correct as f64 / samples as f64;
        RewardEstimate {
            value,
            samples,
            stderr: (value * (1.0 - value) / samples as f64).sqrt(),
            failed,
        }
    }
}

/// Monte-Carlo estimate of the probability that the debate ending in
/// `prefix` converges to the gold answer.
///
/// Runs `rollouts` independent natural continuations to `config.total_rounds`.
/// A complete prefix is scored directly from its final actor answer. Up to
/// half of the roll-outs may fail; the estimate then rests on the rest.
pub fn estimate_final_accuracy(
    task: &Task,
    prefix: &[RoundRecord],
    rollouts: usize,
    config: &DebateConfig,
) -> Result<RewardEstimate, RewardError> {
    if rollouts == 0 {
        return Err(RewardError::InvalidPlan("rollouts must be at least 1".into()));
    }
    let Some(last) = prefix.last() else {
        return Err(DebateError::InvalidPrefix {
            task_id: task.id.clone(),
            len: 0,
            total: config.total_rounds,
        }
        .into());
    };
    if prefix.len() == config.total_rounds {
        let correct = last.actor_answer.is_correct(&task.answer_key) as usize;
        return Ok(RewardEstimate::from_counts(correct, 1, 0));
    }
    let branch = seed::content_hash(&format!("{}\u{0}{}", last.actor_text, last.critic_text));
    let seeds: Vec<u64> = (0..rollouts)
        .map(|k| seed::derive(config.seed, &[&"rollout", &task.id, &prefix.len(), &branch, &k]))
        .collect();
    let outcomes = pool::map(config.max_in_flight, &seeds, |&s| {
        resume_debate(task, prefix, &config.for_rollout(s))
            .map(|t| t.final_answer().is_some_and(|a| a.is_correct(&task.answer_key)))
    });

    let mut correct = 0;
    let mut completed = 0;
    let mut last_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(ok) => {
                completed += 1;
                correct += ok as usize;
            }
            Err(e) => last_error = Some(e),
        }
    }
    let failed = rollouts - completed;
    if let Some(e) = last_error {
        if completed * 2 < rollouts {
            return Err(RewardError::PartialEstimate {
                task_id: task.id.clone(),
                completed,
                requested: rollouts,
                last_error: e.to_string(),
            });
        }
        tracing::warn!(task = %task.id, failed, rollouts, error = %e, "accepting partial estimate");
    }
    Ok(RewardEstimate::from_counts(correct, completed, failed))
}

/// Exact probability that a scripted actor starting in the given state is
/// correct after `steps` fresh critic turns.
///
/// Under the scripted agents correctness is a two-state chain with
/// P(correct → incorrect) = (1 − c)·s and P(incorrect → correct) = c·s.
pub fn analytic_convergence_prob(params: &ScriptedAgentParams, start_correct: bool, steps: usize) -> f64 {
    let break_p = (1.0 - params.c) * params.s;
    let fix_p = params.c * params.s;
    let mut p = if start_correct { 1.0 } else { 0.0 };
    for _ in 0..steps {
        p = p * (1.0 - break_p) + (1.0 - p) * fix_p;
    }
    p
}

/// Exact convergence probability for a scripted prefix followed by
/// `remaining_rounds` natural rounds.
///
/// The first remaining actor turn reacts to the prefix's final critic turn,
/// which is already fixed: it stays put if the critic agreed and follows the
/// critic with probability `s` otherwise. Each later round sees a fresh
/// critic and takes one chain step.
pub fn prefix_convergence_prob(
    params: &ScriptedAgentParams,
    actor_correct: bool,
    critic_backs_gold: bool,
    remaining_rounds: usize,
) -> f64 {
    if remaining_rounds == 0 {
        return if actor_correct { 1.0 } else { 0.0 };
    }
    let first = match (actor_correct, critic_backs_gold) {
        (true, true) => 1.0,
        (false, true) => params.s,
        (true, false) => 1.0 - params.s,
        (false, false) => 0.0,
    };
    let rest = remaining_rounds - 1;
    first * analytic_convergence_prob(params, true, rest)
        + (1.0 - first) * analytic_convergence_prob(params, false, rest)
}
