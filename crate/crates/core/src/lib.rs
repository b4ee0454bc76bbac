//! Multi-agent debate pipeline: corpora, backends, prompts, the debate
//! engine, preference-pair generation, the DPO objective and evaluation.

pub mod backend;
pub mod corpus;
pub mod debate;
pub mod dpo;
pub mod metrics;
pub mod prompts;
pub mod reward;
pub mod seed;

mod pool;

pub use backend::{
    generate, generate_batch, score_sequence, AgentRole, Backend, BackendError, ChatMessage, ChatRole,
    GenerationRequest, GenerationResult, RemoteBackend, RemoteConfig, ScriptedAgentParams, ScriptedBackend,
    ScriptedScorer, TaskRegistry,
};
pub use corpus::{normalize_answer, Answer, AnswerKey, AnswerKind, Corpus, CorpusError, Split, Task, TaskKind};
pub use debate::{
    extract_answer, one_debate_round, resume_debate, run_debate, DebateConfig, DebateError, RoundRecord, Trajectory,
};
pub use dpo::{batch_report, dpo_loss, gradient_check, total_loss, BatchReport, DpoError, DpoParams, ScoredPair};
pub use metrics::{confidence_interval, evaluate, percent_improvement, MetricsError, RunResult, Summary};
pub use prompts::{GuidanceMode, PromptError, PromptKit, RoleGuidance};
pub use reward::{
    analytic_convergence_prob, estimate_final_accuracy, generate_trajectory_dataset, probe_round, select_pair,
    BranchKind, BranchTriple, GenerationPlan, Phase, PreferencePair, RewardError, RewardEstimate, TargetRoles,
};
