//! Per-round accuracy, percent improvement and across-seed confidence
//! intervals for debate evaluations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Answer, AnswerKey, Corpus};
use crate::debate::{extract_answer, run_debate, ConfigSnapshot, DebateConfig, DebateError, Trajectory};
use crate::pool;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("first-round accuracy is 0, improvement is undefined")]
    UndefinedImprovement,
    #[error("need at least 2 values for a confidence interval, got {0}")]
    TooFewValues(usize),
    #[error("{failed} of {total} tasks failed with seed {seed}, above the 10% limit")]
    TooManyFailures { failed: usize, total: usize, seed: u64 },
    #[error("nothing to summarize: {0}")]
    Empty(String),
    #[error("trajectory for unknown task `{0}`")]
    UnknownTask(String),
    #[error("runs disagree on {0}")]
    Mismatch(String),
    #[error(transparent)]
    Debate(#[from] DebateError),
}

pub const CI_Z: f64 = 1.96;

pub const CI_NOTE: &str =
    "95% confidence intervals are mean ± 1.96·sd/√n over independent seeded runs (normal approximation)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub corpus: String,
    pub seed: u64,
    /// Per task, actor correctness at each round.
    pub per_task: BTreeMap<String, Vec<bool>>,
    /// Tasks whose debate failed; recorded as incorrect at every round.
    pub flagged: BTreeSet<String>,
    pub config: ConfigSnapshot,
}

impl RunResult {
    pub fn per_round_accuracy(&self) -> Vec<f64> {
        let rounds = self.config.total_rounds;
        let n = self.per_task.len() as f64;
        (0..rounds)
            .map(|t| self.per_task.values().filter(|c| c[t]).count() as f64 / n)
            .collect()
    }
}

/// Correctness of each round's actor answer; unparseable answers count as
/// incorrect.
pub fn score_trajectory(trajectory: &Trajectory, gold: &AnswerKey, kind: crate::corpus::TaskKind) -> Vec<bool> {
    trajectory
        .rounds
        .iter()
        .map(|r| extract_answer(&r.actor_text, kind).is_correct(gold))
        .collect()
}

/// Accuracy over `(answer, gold)` pairs, crediting unparseable answers with
/// `unparseable_credit` (0 is the strict rule used everywhere else).
pub fn accuracy_with_policy<'a>(
    answers: impl IntoIterator<Item = (&'a Answer, &'a AnswerKey)>,
    unparseable_credit: f64,
) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (answer, gold) in answers {
        n += 1;
        sum += match answer {
            Answer::Unparseable => unparseable_credit,
            a => a.is_correct(gold) as u8 as f64,
        };
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One evaluation pass per seed. Seed `i` uses `config.seed + i`.
pub fn evaluate(corpus: &Corpus, config: &DebateConfig, n_seeds: usize) -> Result<Vec<RunResult>, MetricsError> {
    Ok(evaluate_with_trajectories(corpus, config, n_seeds)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

pub fn evaluate_with_trajectories(
    corpus: &Corpus,
    config: &DebateConfig,
    n_seeds: usize,
) -> Result<Vec<(RunResult, Vec<Trajectory>)>, MetricsError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(MetricsError::Empty(format!("corpus `{}` has no tasks", corpus.name())));
    }
    if n_seeds == 0 {
        return Err(MetricsError::Empty("n_seeds must be positive".into()));
    }
    let mut out = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let cfg = config.clone().with_seed(config.seed.wrapping_add(i as u64));
        let results = pool::map(cfg.max_in_flight, corpus.tasks(), |task| run_debate(task, &cfg));
        let mut run = RunResult {
            corpus: corpus.name().into(),
            seed: cfg.seed,
            per_task: BTreeMap::new(),
            flagged: BTreeSet::new(),
            config: cfg.snapshot(),
        };
        let mut trajectories = Vec::with_capacity(corpus.len());
        for (task, result) in corpus.tasks().iter().zip(results) {
            match result {
                Ok(t) => {
                    run.per_task
                        .insert(task.id.clone(), score_trajectory(&t, &task.answer_key, task.kind));
                    trajectories.push(t);
                }
                Err(e) => {
                    tracing::warn!(task = %task.id, seed = cfg.seed, error = %e, "debate failed; counted as incorrect");
                    run.per_task.insert(task.id.clone(), vec![false; cfg.total_rounds]);
                    run.flagged.insert(task.id.clone());
                }
            }
        }
        if run.flagged.len() * 10 > corpus.len() {
            return Err(MetricsError::TooManyFailures {
                failed: run.flagged.len(),
                total: corpus.len(),
                seed: cfg.seed,
            });
        }
        out.push((run, trajectories));
    }
    Ok(out)
}

/// Rebuilds a run from persisted trajectories. Tasks without a trajectory
/// are flagged and counted incorrect.
pub fn run_from_trajectories(
    corpus: &Corpus,
    trajectories: &[Trajectory],
    seed: u64,
) -> Result<RunResult, MetricsError> {
    let first = trajectories
        .first()
        .ok_or_else(|| MetricsError::Empty("no trajectories".into()))?;
    let config = first.config.clone();
    let tasks: BTreeMap<&str, _> = corpus.tasks().iter().map(|t| (t.id.as_str(), t)).collect();
    let mut per_task = BTreeMap::new();
    for traj in trajectories {
        let task = tasks
            .get(traj.task_id.as_str())
            .ok_or_else(|| MetricsError::UnknownTask(traj.task_id.clone()))?;
        if traj.rounds.len() != config.total_rounds {
            return Err(MetricsError::Mismatch(format!(
                "round count for `{}` ({} vs {})",
                traj.task_id,
                traj.rounds.len(),
                config.total_rounds
            )));
        }
        per_task.insert(
            traj.task_id.clone(),
            score_trajectory(traj, &task.answer_key, task.kind),
        );
    }
    let mut flagged = BTreeSet::new();
    for t in corpus.tasks() {
        if !per_task.contains_key(&t.id) {
            per_task.insert(t.id.clone(), vec![false; config.total_rounds]);
            flagged.insert(t.id.clone());
        }
    }
    Ok(RunResult {
        corpus: corpus.name().into(),
        seed,
        per_task,
        flagged,
        config,
    })
}

/// (last − first) / first over a per-round accuracy curve.
pub fn percent_improvement(per_round_accuracy: &[f64]) -> Result<f64, MetricsError> {
    let (Some(&first), Some(&last)) = (per_round_accuracy.first(), per_round_accuracy.last()) else {
        return Err(MetricsError::Empty("no rounds".into()));
    };
    if first <= 0.0 {
        return Err(MetricsError::UndefinedImprovement);
    }
    Ok((last - first) / first)
}

/// Mean and 95% half-width under the normal approximation, using the
/// sample standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues(n));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok((values[0], 0.0));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, CI_Z * var.sqrt() / (n as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub corpus: String,
    pub tasks: usize,
    pub seeds: Vec<u64>,
    pub per_round_accuracy: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<Vec<f64>>,
    /// Absent when first-round accuracy is 0.
    pub improvement: Option<f64>,
    pub flagged_tasks: usize,
    pub note: String,
}

pub fn summarize(runs: &[RunResult]) -> Result<Summary, MetricsError> {
    let first = runs.first().ok_or_else(|| MetricsError::Empty("no runs".into()))?;
    let rounds = first.config.total_rounds;
    if let Some(r) = runs
        .iter()
        .find(|r| r.config.total_rounds != rounds || r.corpus != first.corpus)
    {
        return Err(MetricsError::Mismatch(format!(
            "corpus or round count (seed {})",
            r.seed
        )));
    }
    let curves: Vec<Vec<f64>> = runs.iter().map(RunResult::per_round_accuracy).collect();
    let mut mean = Vec::with_capacity(rounds);
    let mut half = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let column: Vec<f64> = curves.iter().map(|c| c[t]).collect();
        match confidence_interval(&column) {
            Ok((m, h)) => {
                mean.push(m);
                half.push(h);
            }
            Err(_) => mean.push(column[0]),
        }
    }
    Ok(Summary {
        corpus: first.corpus.clone(),
        tasks: first.per_task.len(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        improvement: percent_improvement(&mean).ok(),
        per_round_accuracy: mean,
        ci_halfwidth: (runs.len() >= 2).then_some(half),
        flagged_tasks: runs.iter().map(|r| r.flagged.len()).sum(),
        note: CI_NOTE.into(),
    })
}

/// Aligned plain-text table of a summary, with the CI method as footer.
pub fn render_table(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "corpus: {}  tasks: {}  seeds: {}",
        summary.corpus,
        summary.tasks,
        summary.seeds.len()
    );
    let _ = writeln!(out, "{:>5}  {:>8}  {:>9}", "round", "accuracy", "±95% CI");
    for (t, acc) in summary.per_round_accuracy.iter().enumerate() {
        let ci = summary
            .ci_halfwidth
            .as_ref()
            .map_or_else(|| "-".to_string(), |h| format!("{:.4}", h[t]));
        let _ = writeln!(out, "{t:>5}  {acc:>8.4}  {ci:>9}");
    }
    match summary.improvement {
        Some(i) => {
            let _ = writeln!(out, "improvement (last vs first round): {:+.2}%", i * 100.0);
        }
        None => {
            let _ = writeln!(out, "improvement: undefined (first-round accuracy is 0)");
        }
    }
    if summary.flagged_tasks > 0 {
        let _ = writeln!(out, "failed debates counted as incorrect: {}", summary.flagged_tasks);
    }
    let _ = writeln!(out, "note: {}", summary.note);
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::backend::{ScriptedAgentParams, ScriptedBackend, TaskRegistry};
    use crate::corpus::{Split, Task};

    fn corpus(n: usize) -> Corpus {
        let tasks = (0..n)
            .map(|i| Task::yes_no(format!("t{i}"), format!("question {i}"), Some("p".into()), i % 2 == 1))
            .collect();
        Corpus::new("m", Split::Test, tasks).unwrap()
    }

    fn config(c: &Corpus, params: ScriptedAgentParams) -> DebateConfig {
        let (a, cr) = ScriptedBackend::team(params, Arc::new(TaskRegistry::from_corpus(c))).unwrap();
        DebateConfig::new(a, cr).with_seed(1)
    }

    #[test]
    fn improvement_examples() {
        assert_abs_diff_eq!(percent_improvement(&[0.8, 0.85, 0.88]).unwrap(), 0.1, epsilon = 1e-12);
        assert_eq!(percent_improvement(&[0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(
            percent_improvement(&[0.0, 0.3]),
            Err(MetricsError::UndefinedImprovement)
        ));
    }

    #[test]
    fn ci_examples() {
        let (m, h) = confidence_interval(&[0.88, 0.89, 0.90]).unwrap();
        assert_abs_diff_eq!(m, 0.89, epsilon = 1e-12);
        assert_abs_diff_eq!(h, 1.96 * 0.01 / 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(confidence_interval(&[0.7, 0.7, 0.7]).unwrap().1, 0.0);
        assert!(confidence_interval(&[0.7]).is_err());
    }

    #[test]
    fn ci_scales_with_inverse_root_n() {
        // alternating ±0.01 around 0.8 has sample sd 0.01·sqrt(n/(n−1))
        let data = |n: usize| {
            (0..n)
                .map(|i| if i % 2 == 0 { 0.79 } else { 0.81 })
                .collect::<Vec<f64>>()
        };
        let h: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&n| confidence_interval(&data(n)).unwrap().1)
            .collect();
        for (n, w) in [2usize, 4, 8].iter().zip(&h) {
            let sd = (0.0001 * *n as f64 / (*n as f64 - 1.0)).sqrt();
            assert_abs_diff_eq!(*w, 1.96 * sd / (*n as f64).sqrt(), epsilon = 1e-12);
        }
        let corrected = |n: f64| (n / (n - 1.0)).sqrt();
        for (i, j) in [(0, 1), (1, 2)] {
            let ratio = (h[i] / corrected([2.0, 4.0, 8.0][i])) / (h[j] / corrected([2.0, 4.0, 8.0][j]));
            assert!((ratio - 2f64.sqrt()).abs() / 2f64.sqrt() < 0.05, "{ratio}");
        }
    }

    #[test]
    fn stubborn_correct_and_perfect_corrector() {
        let c = corpus(20);
        let runs = evaluate(&c, &config(&c, ScriptedAgentParams::new(1.0, 0.0, 0.3)), 1).unwrap();
        assert_eq!(runs[0].per_round_accuracy(), vec![1.0; 5]);
        let runs = evaluate(&c, &config(&c, ScriptedAgentParams::new(0.0, 1.0, 1.0)), 2).unwrap();
        for r in &runs {
            assert_eq!(r.per_round_accuracy(), vec![0.0, 1.0, 1.0, 1.0, 1.0]);
        }
        let s = summarize(&runs).unwrap();
        assert_eq!(s.ci_halfwidth, Some(vec![0.0; 5]));
        assert_eq!(s.improvement, None);
        assert_eq!(s.seeds, vec![1, 2]);
    }

    #[test]
    fn recomputation_matches_online() {
        let c = corpus(30);
        let cfg = config(&c, ScriptedAgentParams::new(0.5, 0.5, 0.7));
        for (run, trajs) in evaluate_with_trajectories(&c, &cfg, 2).unwrap() {
            let again = run_from_trajectories(&c, &trajs, run.seed).unwrap();
            assert_eq!(again.per_task, run.per_task);
            assert_eq!(again.per_round_accuracy(), run.per_round_accuracy());
        }
    }

    #[test]
    fn missing_trajectories_are_flagged() {
        let c = corpus(4);
        let cfg = config(&c, ScriptedAgentParams::new(1.0, 0.0, 0.3));
        let (_, trajs) = evaluate_with_trajectories(&c, &cfg, 1).unwrap().remove(0);
        let run = run_from_trajectories(&c, &trajs[1..], 1).unwrap();
        assert_eq!(run.flagged.len(), 1);
        assert_eq!(run.per_round_accuracy()[0], 0.75);
    }

    #[test]
    fn table_mentions_ci_method() {
        let c = corpus(4);
        let runs = evaluate(&c, &config(&c, ScriptedAgentParams::new(0.5, 0.5, 0.5)), 3).unwrap();
        let table = render_table(&summarize(&runs).unwrap());
        assert!(table.contains("independent seeded runs"));
        assert_eq!(
            table
                .lines()
                .filter(|l| l.trim_start().starts_with(char::is_numeric))
                .count(),
            5
        );
    }

    fn answer_strategy() -> impl Strategy<Value = (Option<bool>, bool)> {
        (proptest::option::of(any::<bool>()), any::<bool>())
    }

    proptest! {
        #[test]
        fn strict_policy_is_a_lower_bound(
            cells in proptest::collection::vec(answer_strategy(), 1..60), credit in 0.0f64..=1.0
        ) {
            let gold = AnswerKey::yes();
            let answers: Vec<Answer> = cells
                .iter()
                .map(|(a, _)| match a {
                    None => Answer::Unparseable,
                    Some(true) => Answer::Key(AnswerKey::yes()),
                    Some(false) => Answer::Key(AnswerKey::no()),
                })
                .collect();
            let strict = accuracy_with_policy(answers.iter().map(|a| (a, &gold)), 0.0);
            let lenient = accuracy_with_policy(answers.iter().map(|a| (a, &gold)), credit);
            prop_assert!(strict <= lenient);
        }
    }
}
