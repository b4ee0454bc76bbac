use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pairs::{
    generate_trajectory_dataset, BranchTriple, GenerationOutput, GenerationPlan, Phase, PreferencePair, TaskFailure,
};
use super::RewardError;
use crate::backend::AgentRole;
use crate::corpus::Corpus;
use crate::debate::DebateConfig;

pub const DATASET_FORMAT: &str = "debate-preference-pairs/1";

const CRITIC_DELTA_NOTE: &str =
    "critic gains use the same toward/natural/away rewards as the actor (symmetric definition assumed)";

/// First line of every preference dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub corpus: String,
    pub phase: Phase,
    pub roles: Vec<AgentRole>,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub rollouts: usize,
    pub plan: GenerationPlan,
    pub seeds: BTreeMap<String, u64>,
    pub total_rounds: usize,
    pub actor_backend: String,
    pub critic_backend: String,
    pub critic_delta: String,
    /// For the actor phase: whether a finished critic phase was found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_critic_phase: Option<bool>,
    pub tasks: usize,
    pub failed_tasks: Vec<TaskFailure>,
    pub pairs: usize,
}

impl DatasetHeader {
    pub fn new(corpus: &Corpus, plan: &GenerationPlan, config: &DebateConfig) -> Self {
        let mut seeds = plan.seeds.clone();
        seeds.insert("debate".into(), config.seed);
        DatasetHeader {
            format: DATASET_FORMAT.into(),
            corpus: corpus.name().into(),
            phase: plan.phase,
            roles: plan.emitted_roles(),
            epsilon: plan.epsilon,
            rollouts: plan.rollouts,
            plan: plan.clone(),
            seeds,
            total_rounds: config.total_rounds,
            actor_backend: config.actor.id().into(),
            critic_backend: config.critic.id().into(),
            critic_delta: CRITIC_DELTA_NOTE.into(),
            after_critic_phase: None,
            tasks: corpus.len(),
            failed_tasks: Vec::new(),
            pairs: 0,
        }
    }

    /// Records the task failures and pair count of a finished run.
    pub fn with_output(mut self, output: &GenerationOutput) -> Self {
        self.failed_tasks = output.failures.clone();
        self.pairs = output.pairs.len();
        self
    }
}

fn to_line<T: Serialize>(out: &mut impl Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

pub fn write_dataset(writer: impl Write, header: &DatasetHeader, pairs: &[PreferencePair]) -> Result<(), RewardError> {
    let mut out = BufWriter::new(writer);
    to_line(&mut out, header)?;
    for p in pairs {
        to_line(&mut out, p)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(reader: impl BufRead) -> Result<(DatasetHeader, Vec<PreferencePair>), RewardError> {
    let mut header = None;
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |e: serde_json::Error| RewardError::Format {
            line: i + 1,
            reason: e.to_string(),
        };
        if header.is_none() {
            let h: DatasetHeader = serde_json::from_str(&line).map_err(err)?;
            if h.format != DATASET_FORMAT {
                return Err(RewardError::Format {
                    line: i + 1,
                    reason: format!("unsupported dataset format `{}`", h.format),
                });
            }
            header = Some(h);
        } else {
            pairs.push(serde_json::from_str(&line).map_err(err)?);
        }
    }
    let header = header.ok_or(RewardError::Format {
        line: 0,
        reason: "missing header line".into(),
    })?;
    Ok((header, pairs))
}

pub fn save_triples(path: impl AsRef<Path>, triples: &[BranchTriple]) -> Result<(), RewardError> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in triples {
        to_line(&mut out, t)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<BranchTriple>, RewardError> {
    let mut triples = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        triples.push(serde_json::from_str(&line).map_err(|e| RewardError::Format {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(triples)
}

pub fn phase_marker_path(out_dir: &Path, phase: Phase) -> PathBuf {
    out_dir.join(format!("{}.done", phase.as_str()))
}

pub fn phase_dataset_path(out_dir: &Path, phase: Phase) -> PathBuf {
    out_dir.join(format!("{}_pairs.jsonl", phase.as_str()))
}

#[derive(Clone, Debug)]
pub struct PhaseOutcome {
    pub header: DatasetHeader,
    pub pairs: Vec<PreferencePair>,
    pub triples: Vec<BranchTriple>,
    pub dataset_path: PathBuf,
}

/// Runs one best-response phase and writes its dataset and marker file
/// into `out_dir`.
///
/// An actor phase without a finished critic phase is allowed (ablations)
/// but logged and recorded in the header.
pub fn run_phase(
    corpus: &Corpus,
    plan: &GenerationPlan,
    config: &DebateConfig,
    out_dir: &Path,
) -> Result<PhaseOutcome, RewardError> {
    fs::create_dir_all(out_dir)?;
    let mut header = DatasetHeader::new(corpus, plan, config);
    if plan.phase == Phase::ActorPhase {
        let done = phase_marker_path(out_dir, Phase::CriticPhase).exists();
        if !done {
            tracing::warn!(dir = %out_dir.display(), "actor phase started without a finished critic phase");
        }
        header.after_critic_phase = Some(done);
    }
    let out = generate_trajectory_dataset(corpus, plan, config)?;
    let header = header.with_output(&out);

    let dataset_path = phase_dataset_path(out_dir, plan.phase);
    write_dataset(File::create(&dataset_path)?, &header, &out.pairs)?;
    let file_name = dataset_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    fs::write(phase_marker_path(out_dir, plan.phase), format!("{file_name}\n"))?;
    tracing::info!(phase = plan.phase.as_str(), pairs = header.pairs, path = %dataset_path.display(), "phase finished");
    Ok(PhaseOutcome {
        header,
        pairs: out.pairs,
        triples: out.triples,
        dataset_path,
    })
}

/// Critic phase with `critic_phase_config`, then actor phase with
/// `actor_phase_config`, which normally carries the tuned critic.
pub fn run_best_response_phases(
    corpus: &Corpus,
    plan: &GenerationPlan,
    critic_phase_config: &DebateConfig,
    actor_phase_config: &DebateConfig,
    out_dir: &Path,
) -> Result<(PhaseOutcome, PhaseOutcome), RewardError> {
    let critic = run_phase(
        corpus,
        &GenerationPlan {
            phase: Phase::CriticPhase,
            ..plan.clone()
        },
        critic_phase_config,
        out_dir,
    )?;
    let actor = run_phase(
        corpus,
        &GenerationPlan {
            phase: Phase::ActorPhase,
            ..plan.clone()
        },
        actor_phase_config,
        out_dir,
    )?;
    Ok((critic, actor))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::backend::{ScriptedAgentParams, ScriptedBackend, TaskRegistry};
    use crate::corpus::{Split, Task};

    fn setup() -> (Corpus, DebateConfig) {
        let tasks = (0..6)
            .map(|i| {
                Task::yes_no(
                    format!("t{i}"),
                    format!("question number {i}"),
                    Some("p".into()),
                    i % 3 == 0,
                )
            })
            .collect();
        let corpus = Corpus::new("tiny", Split::Train, tasks).unwrap();
        let (a, c) = ScriptedBackend::team(
            ScriptedAgentParams::new(0.4, 0.6, 0.6),
            Arc::new(TaskRegistry::from_corpus(&corpus)),
        )
        .unwrap();
        (corpus, DebateConfig::new(a, c).with_seed(9))
    }

    #[test]
    fn phases_tag_roles_and_write_markers() {
        let (corpus, cfg) = setup();
        let dir = tempfile::tempdir().unwrap();
        let plan = GenerationPlan {
            epsilon: 0.1,
            rollouts: 4,
            ..Default::default()
        };
        let (critic, actor) = run_best_response_phases(&corpus, &plan, &cfg, &cfg, dir.path()).unwrap();
        assert!(critic.pairs.iter().all(|p| p.role == AgentRole::Critic));
        assert!(actor.pairs.iter().all(|p| p.role == AgentRole::Actor));
        assert_eq!(actor.header.after_critic_phase, Some(true));
        assert!(phase_marker_path(dir.path(), Phase::ActorPhase).exists());

        let (header, pairs) = read_dataset(BufReader::new(File::open(&critic.dataset_path).unwrap())).unwrap();
        assert_eq!(header, critic.header);
        assert_eq!(pairs, critic.pairs);
        assert_eq!(header.corpus, "tiny");
        assert_eq!((header.epsilon, header.rollouts), (0.1, 4));
        assert_eq!(header.seeds.get("debate"), Some(&9));
    }

    #[test]
    fn actor_phase_alone_only_warns() {
        let (corpus, cfg) = setup();
        let dir = tempfile::tempdir().unwrap();
        let plan = GenerationPlan {
            phase: Phase::ActorPhase,
            rollouts: 2,
            ..Default::default()
        };
        let out = run_phase(&corpus, &plan, &cfg, dir.path()).unwrap();
        assert_eq!(out.header.after_critic_phase, Some(false));
    }

    #[test]
    fn triples_round_trip() {
        let (corpus, cfg) = setup();
        let plan = GenerationPlan {
            rollouts: 2,
            ..Default::default()
        };
        let out = generate_trajectory_dataset(&corpus, &plan, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triples.jsonl");
        save_triples(&path, &out.triples).unwrap();
        assert_eq!(load_triples(&path).unwrap(), out.triples);
    }

    #[test]
    fn rejects_missing_header() {
        assert!(read_dataset(&b""[..]).is_err());
        assert!(read_dataset(&b"{\"format\":\"other\"}\n"[..]).is_err());
    }
}
