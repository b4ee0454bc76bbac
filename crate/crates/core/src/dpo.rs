//! DPO preference loss with a negative log-likelihood regularizer,
//! computed from sequence log-probabilities supplied by backends.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{bounded_map, score_sequence, AgentRole, Backend, BackendError};
use crate::reward::{BranchKind, PreferencePair};

#[derive(Debug, Error)]
pub enum DpoError {
    #[error("log-probability {name}={value} must be finite and at most 0")]
    InvalidLogprob { name: &'static str, value: f64 },
    #[error("chosen_token_count must be positive")]
    ZeroTokens,
    #[error("invalid DPO parameters: {0}")]
    InvalidParams(String),
    #[error("cannot summarize an empty batch")]
    EmptyBatch,
    #[error("no scores for pair {0}")]
    MissingScore(String),
    #[error("duplicate scores for pair {0}")]
    DuplicateScore(String),
    #[error("score file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("scoring pair {key}: {source}")]
    Backend {
        key: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub logp_policy_chosen: f64,
    pub logp_policy_rejected: f64,
    pub logp_ref_chosen: f64,
    pub logp_ref_rejected: f64,
    pub chosen_token_count: usize,
}

impl ScoredPair {
    pub fn validate(&self) -> Result<(), DpoError> {
        for (name, value) in [
            ("logp_policy_chosen", self.logp_policy_chosen),
            ("logp_policy_rejected", self.logp_policy_rejected),
            ("logp_ref_chosen", self.logp_ref_chosen),
            ("logp_ref_rejected", self.logp_ref_rejected),
        ] {
            if !value.is_finite() || value > 0.0 {
                return Err(DpoError::InvalidLogprob { name, value });
            }
        }
        Ok(())
    }

    /// Chosen log-ratio minus rejected log-ratio.
    pub fn margin(&self) -> f64 {
        (self.logp_policy_chosen - self.logp_ref_chosen) - (self.logp_policy_rejected - self.logp_ref_rejected)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoParams {
    pub beta: f64,
    pub nll_weight: f64,
    /// Use the summed chosen log-likelihood instead of the per-token mean.
    pub nll_raw_sum: bool,
}

impl Default for DpoParams {
    fn default() -> Self {
        DpoParams {
            beta: 0.1,
            nll_weight: 1.0,
            nll_raw_sum: false,
        }
    }
}

impl DpoParams {
    pub fn new(beta: f64) -> Result<Self, DpoError> {
        let p = DpoParams {
            beta,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(DpoError::InvalidParams(format!("beta={} must be positive", self.beta)));
        }
        if !(self.nll_weight.is_finite() && self.nll_weight >= 0.0) {
            return Err(DpoError::InvalidParams(format!(
                "nll_weight={} must be non-negative",
                self.nll_weight
            )));
        }
        Ok(())
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// −log σ(β·margin).
pub fn loss_from_margin(margin: f64, beta: f64) -> f64 {
    softplus(-beta * margin)
}

/// d/d(margin) of [`loss_from_margin`].
pub fn loss_slope(margin: f64, beta: f64) -> f64 {
    -beta * sigmoid(-beta * margin)
}

pub fn dpo_loss(pair: &ScoredPair, params: &DpoParams) -> Result<f64, DpoError> {
    params.validate()?;
    pair.validate()?;
    Ok(loss_from_margin(pair.margin(), params.beta))
}

/// DPO loss plus the weighted negative log-likelihood of the chosen text.
pub fn total_loss(pair: &ScoredPair, params: &DpoParams) -> Result<f64, DpoError> {
    let dpo = dpo_loss(pair, params)?;
    if pair.chosen_token_count == 0 {
        return Err(DpoError::ZeroTokens);
    }
    let nll = if params.nll_raw_sum {
        -pair.logp_policy_chosen
    } else {
        -pair.logp_policy_chosen / pair.chosen_token_count as f64
    };
    Ok(dpo + params.nll_weight * nll)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub pairs: usize,
    pub beta: f64,
    pub mean_dpo_loss: f64,
    pub mean_total_loss: f64,
    pub mean_margin: f64,
    /// Share of pairs whose implicit reward already ranks chosen first.
    pub fraction_positive_margin: f64,
}

pub fn batch_report(pairs: &[ScoredPair], params: &DpoParams) -> Result<BatchReport, DpoError> {
    if pairs.is_empty() {
        return Err(DpoError::EmptyBatch);
    }
    let n = pairs.len() as f64;
    let (mut dpo, mut total, mut margin, mut positive) = (0.0, 0.0, 0.0, 0usize);
    for p in pairs {
        dpo += dpo_loss(p, params)?;
        total += total_loss(p, params)?;
        let m = p.margin();
        margin += m;
        positive += (m > 0.0) as usize;
    }
    Ok(BatchReport {
        pairs: pairs.len(),
        beta: params.beta,
        mean_dpo_loss: dpo / n,
        mean_total_loss: total / n,
        mean_margin: margin / n,
        fraction_positive_margin: positive as f64 / n,
    })
}

pub const GRADIENT_STEP: f64 = 1e-5;

/// Margins −10, −9.9, ..., 10.
pub fn default_margin_grid() -> Vec<f64> {
    (-100..=100).map(|i| i as f64 / 10.0).collect()
}

/// Largest gap between the analytic slope and a central finite difference
/// over `margins`.
pub fn gradient_check(params: &DpoParams, margins: &[f64]) -> Result<f64, DpoError> {
    params.validate()?;
    let beta = params.beta;
    let worst = margins
        .iter()
        .map(|&m| {
            let numeric = (loss_from_margin(m + GRADIENT_STEP, beta) - loss_from_margin(m - GRADIENT_STEP, beta))
                / (2.0 * GRADIENT_STEP);
            (numeric - loss_slope(m, beta)).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Per-pair log-probabilities as stored in a score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub task_id: String,
    pub round: usize,
    pub role: AgentRole,
    pub branch_kind: BranchKind,
    #[serde(flatten)]
    pub scores: ScoredPair,
}

fn pair_key(task_id: &str, round: usize, role: AgentRole, kind: BranchKind) -> String {
    format!("{task_id}/{round}/{}/{kind:?}", role.as_str())
}

impl ScoreRecord {
    fn key(&self) -> String {
        pair_key(&self.task_id, self.round, self.role, self.branch_kind)
    }
}

/// Whitespace-delimited token count, the length unit for the NLL term
/// when scores come from a backend that only returns sums.
pub fn approx_token_count(text: &str) -> usize {
    text.split_whitespace().count().max(1)
}

/// Scores every pair under a policy and a reference backend.
pub fn score_pairs(
    pairs: &[PreferencePair],
    policy: &dyn Backend,
    reference: &dyn Backend,
    max_in_flight: usize,
) -> Result<Vec<ScoreRecord>, DpoError> {
    bounded_map(pairs, max_in_flight, |p| {
        let key = pair_key(&p.task_id, p.round, p.role, p.branch_kind);
        let score = |b: &dyn Backend, text: &str| {
            score_sequence(b, &p.context, text).map_err(|source| DpoError::Backend {
                key: key.clone(),
                source,
            })
        };
        Ok(ScoreRecord {
            task_id: p.task_id.clone(),
            round: p.round,
            role: p.role,
            branch_kind: p.branch_kind,
            scores: ScoredPair {
                logp_policy_chosen: score(policy, &p.chosen)?,
                logp_policy_rejected: score(policy, &p.rejected)?,
                logp_ref_chosen: score(reference, &p.chosen)?,
                logp_ref_rejected: score(reference, &p.rejected)?,
                chosen_token_count: approx_token_count(&p.chosen),
            },
        })
    })
    .into_iter()
    .collect()
}

pub fn write_scores(mut writer: impl Write, scores: &[ScoreRecord]) -> Result<(), DpoError> {
    for s in scores {
        serde_json::to_writer(&mut writer, s).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_scores(reader: impl BufRead) -> Result<Vec<ScoreRecord>, DpoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DpoError::Format {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Matches every dataset pair with its score record by
/// (task, round, role, branch kind).
pub fn join_scores(pairs: &[PreferencePair], scores: &[ScoreRecord]) -> Result<Vec<ScoredPair>, DpoError> {
    let mut by_key = HashMap::with_capacity(scores.len());
    for s in scores {
        if by_key.insert(s.key(), s.scores).is_some() {
            return Err(DpoError::DuplicateScore(s.key()));
        }
    }
    pairs
        .iter()
        .map(|p| {
            let key = pair_key(&p.task_id, p.round, p.role, p.branch_kind);
            by_key.get(&key).copied().ok_or(DpoError::MissingScore(key))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn pair_with_margin(margin: f64) -> ScoredPair {
        ScoredPair {
            logp_policy_chosen: -5.0,
            logp_policy_rejected: -5.0 - margin.max(0.0),
            logp_ref_chosen: -5.0,
            logp_ref_rejected: -5.0 + margin.min(0.0),
            chosen_token_count: 4,
        }
    }

    #[test]
    fn closed_form_values() {
        let unit = DpoParams::new(1.0).unwrap();
        let equal = ScoredPair {
            logp_policy_chosen: -2.0,
            logp_policy_rejected: -2.0,
            logp_ref_chosen: -2.0,
            logp_ref_rejected: -2.0,
            chosen_token_count: 1,
        };
        assert_abs_diff_eq!(
            dpo_loss(&equal, &unit).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert_abs_diff_eq!(
            dpo_loss(&pair_with_margin(2.0), &unit).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            dpo_loss(&pair_with_margin(-2.0), &unit).unwrap(),
            2.0 + expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nll_term() {
        let p = ScoredPair {
            logp_policy_chosen: -3.0,
            logp_policy_rejected: -3.0,
            logp_ref_chosen: -3.0,
            logp_ref_rejected: -3.0,
            chosen_token_count: 3,
        };
        let one = DpoParams::new(1.0).unwrap();
        assert_abs_diff_eq!(
            total_loss(&p, &one).unwrap(),
            std::f64::consts::LN_2 + 1.0,
            epsilon = 1e-15
        );
        let off = DpoParams { nll_weight: 0.0, ..one };
        assert_eq!(total_loss(&p, &off).unwrap(), dpo_loss(&p, &off).unwrap());
        let two = DpoParams { nll_weight: 2.0, ..one };
        let dpo = dpo_loss(&p, &one).unwrap();
        assert_abs_diff_eq!(
            total_loss(&p, &two).unwrap() - dpo,
            2.0 * (total_loss(&p, &one).unwrap() - dpo),
            epsilon = 1e-15
        );
        let raw = DpoParams {
            nll_raw_sum: true,
            ..one
        };
        assert_abs_diff_eq!(
            total_loss(&p, &raw).unwrap(),
            std::f64::consts::LN_2 + 3.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            total_loss(
                &ScoredPair {
                    chosen_token_count: 0,
                    ..p
                },
                &one
            ),
            Err(DpoError::ZeroTokens)
        ));
    }

    #[test]
    fn batch_examples() {
        let unit = DpoParams::new(1.0).unwrap();
        let r = batch_report(&[pair_with_margin(2.0), pair_with_margin(-2.0)], &unit).unwrap();
        let expected = (2.0 + 2.0 * (1.0 + (-2.0f64).exp()).ln()) / 2.0;
        assert_abs_diff_eq!(r.mean_dpo_loss, expected, epsilon = 1e-12);
        assert_eq!(r.fraction_positive_margin, 0.5);
        assert_abs_diff_eq!(r.mean_margin, 0.0, epsilon = 1e-12);
        let r = batch_report(&[pair_with_margin(0.0)], &unit).unwrap();
        assert_eq!(r.fraction_positive_margin, 0.0);
        assert_abs_diff_eq!(r.mean_dpo_loss, std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(matches!(batch_report(&[], &unit), Err(DpoError::EmptyBatch)));
    }

    #[test]
    fn gradient_and_params() {
        let p = DpoParams::default();
        let grid = default_margin_grid();
        assert!(grid.contains(&0.0));
        assert!(gradient_check(&p, &grid).unwrap() < 1e-6);
        assert_abs_diff_eq!(loss_slope(0.0, p.beta), -p.beta / 2.0, epsilon = 1e-15);
        assert!(DpoParams::new(0.0).is_err());
        assert!(gradient_check(&DpoParams { beta: 0.0, ..p }, &grid).is_err());
    }

    #[test]
    fn rejects_bad_logprobs() {
        let mut p = pair_with_margin(1.0);
        p.logp_ref_rejected = f64::NAN;
        assert!(dpo_loss(&p, &DpoParams::default()).is_err());
        p.logp_ref_rejected = 0.5;
        assert!(dpo_loss(&p, &DpoParams::default()).is_err());
    }

    #[test]
    fn extreme_margins_are_finite() {
        for m in [-50.0, 50.0, -1e4, 1e4] {
            let l = loss_from_margin(m, 1.0);
            assert!(l.is_finite() && l >= 0.0, "{m} -> {l}");
            assert!(loss_slope(m, 1.0).is_finite());
        }
        assert_abs_diff_eq!(loss_from_margin(-50.0, 1.0), 50.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn symmetry_identity(m in -60.0f64..60.0, beta in 0.01f64..3.0) {
            let sum = loss_from_margin(m, beta) + loss_from_margin(-m, beta);
            let x = (beta * m).abs();
            prop_assert!((sum - (x + 2.0 * (-x).exp().ln_1p())).abs() < 1e-9);
            prop_assert!(sum >= 2.0 * std::f64::consts::LN_2 - 1e-12);
        }

        #[test]
        fn shift_invariance(
            pc in -50.0f64..0.0, pr in -50.0f64..0.0, rc in -50.0f64..0.0, rr in -50.0f64..0.0,
            a in -20.0f64..0.0, b in -20.0f64..0.0
        ) {
            let params = DpoParams::new(0.7).unwrap();
            let base = ScoredPair { logp_policy_chosen: pc, logp_policy_rejected: pr, logp_ref_chosen: rc, logp_ref_rejected: rr, chosen_token_count: 2 };
            let shifted = ScoredPair {
                logp_policy_chosen: pc + a, logp_policy_rejected: pr + a,
                logp_ref_chosen: rc + b, logp_ref_rejected: rr + b, ..base
            };
            let d = (dpo_loss(&base, &params).unwrap() - dpo_loss(&shifted, &params).unwrap()).abs();
            prop_assert!(d < 1e-12, "{d}");
        }

        #[test]
        fn decreasing_in_chosen_logprob(pc in -40.0f64..-1.0, step in 0.01f64..1.0) {
            let params = DpoParams::new(1.0).unwrap();
            let p = ScoredPair { logp_policy_chosen: pc, logp_policy_rejected: -10.0, logp_ref_chosen: -10.0, logp_ref_rejected: -10.0, chosen_token_count: 1 };
            let q = ScoredPair { logp_policy_chosen: pc + step, ..p };
            prop_assert!(dpo_loss(&q, &params).unwrap() < dpo_loss(&p, &params).unwrap());
        }
    }
}
