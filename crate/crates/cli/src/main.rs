mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use debate_core::corpus::{parse_records, split_corpus, SourceFormat, Split};
use debate_core::debate::{load_trajectories, save_trajectories};
use debate_core::dpo::{self, default_margin_grid, read_scores, write_scores};
use debate_core::metrics::{self, render_table};
use debate_core::reward::{self, read_dataset, write_dataset, DatasetHeader, GenerationPlan};
use debate_core::{AgentRole, Corpus, TaskRegistry};
use serde_json::json;

use config::{BackendKind, Config};

const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "debate",
    version,
    about = "Actor-critic debate evaluation and preference-data pipeline"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configured debate seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log filter, e.g. `info` or `debate_core=debug` (RUST_LOG wins when set).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest and partition task corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Run debates and report per-round accuracy.
    #[command(subcommand)]
    Debate(DebateCmd),
    /// Generate preference pairs from guided debates.
    #[command(subcommand)]
    Data(DataCmd),
    /// Run the critic phase and then the actor phase.
    #[command(subcommand)]
    Phases(PhasesCmd),
    /// Evaluate or check the preference loss.
    #[command(subcommand)]
    Loss(LossCmd),
    /// Recompute accuracy metrics from saved trajectories.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Convert a raw source file into the task corpus format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Source layout; defaults to the configured one.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Corpus name; defaults to the input file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Split a corpus into train, validation and test files.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long, default_value_t = 0.1)]
        validation: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    BoolqLike,
    McLike,
}

impl From<FormatArg> for SourceFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::BoolqLike => SourceFormat::BoolqLike,
            FormatArg::McLike => SourceFormat::McLike,
        }
    }
}

#[derive(Args)]
struct BackendArgs {
    /// Number of rounds per debate.
    #[arg(long)]
    rounds: Option<usize>,
    /// Use this backend kind for both actor and critic.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Maximum concurrent generations.
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Subcommand)]
enum DebateCmd {
    /// Debate every task of a corpus.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Independent seeded runs; seed i uses base seed + i.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value = "trajectories.jsonl")]
        out: PathBuf,
        /// Also write the summary as JSON.
        #[arg(long)]
        summary_json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Critic,
    Actor,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetRolesArg {
    Both,
    ActorOnly,
    CriticOnly,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    /// Roll-outs per reward estimate.
    #[arg(long)]
    rollouts: Option<usize>,
    /// Comma-separated round indices; all rounds after the first by default.
    #[arg(long, value_delimiter = ',')]
    rounds_to_probe: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    target_roles: Option<TargetRolesArg>,
}

impl PlanArgs {
    fn apply(&self, plan: &mut GenerationPlan) {
        if let Some(e) = self.epsilon {
            plan.epsilon = e;
        }
        if let Some(k) = self.rollouts {
            plan.rollouts = k;
        }
        if let Some(r) = &self.rounds_to_probe {
            plan.rounds_to_probe = Some(r.iter().copied().collect());
        }
        if let Some(t) = self.target_roles {
            plan.target_roles = match t {
                TargetRolesArg::Both => reward::TargetRoles::Both,
                TargetRolesArg::ActorOnly => reward::TargetRoles::ActorOnly,
                TargetRolesArg::CriticOnly => reward::TargetRoles::CriticOnly,
            };
        }
    }
}

#[derive(Subcommand)]
enum DataCmd {
    /// Probe debates and write a preference dataset.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum, default_value = "critic")]
        phase: PhaseArg,
        #[arg(long, default_value = "pairs.jsonl")]
        out: PathBuf,
        /// Also save every probed branch triple for later replay.
        #[arg(long)]
        triples: Option<PathBuf>,
    },
    /// Re-select pairs from saved branch triples at a new threshold.
    Replay {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value = "critic")]
        phase: PhaseArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PhasesCmd {
    /// Critic phase, then actor phase, into one output directory.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        plan: PlanArgs,
        /// Config whose [critic] section (the tuned critic) is used in the actor phase.
        #[arg(long)]
        tuned_critic_config: Option<PathBuf>,
        /// Run only this phase.
        #[arg(long, value_enum)]
        only: Option<PhaseArg>,
    },
}

#[derive(Args)]
struct DpoArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    nll_weight: Option<f64>,
    /// Sum the chosen log-likelihood instead of averaging per token.
    #[arg(long)]
    raw_sum: bool,
}

#[derive(Subcommand)]
enum LossCmd {
    /// Summarize the loss over a dataset joined with its score file.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        dpo: DpoArgs,
    },
    /// Score a dataset's pairs with the policy and reference backends.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        /// Corpus the dataset was generated from (needed by scripted backends).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "scores.jsonl")]
        out: PathBuf,
    },
    /// Compare the analytic loss slope with finite differences.
    Check {
        #[command(flatten)]
        dpo: DpoArgs,
    },
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(&cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
            let line = json!({"status": "error", "error": err.to_string(), "causes": causes});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn init_tracing(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(level))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.debate.seed = seed;
    }
    match cli.command {
        Command::Corpus(cmd) => corpus_cmd(&cfg, cmd),
        Command::Debate(DebateCmd::Run {
            corpus,
            backend,
            seeds,
            out,
            summary_json,
        }) => debate_run(cfg, &corpus, &backend, seeds, &out, summary_json.as_deref()),
        Command::Data(cmd) => data_cmd(cfg, cmd),
        Command::Phases(PhasesCmd::Run {
            corpus,
            out_dir,
            backend,
            plan,
            tuned_critic_config,
            only,
        }) => phases_run(
            cfg,
            &corpus,
            &out_dir,
            &backend,
            &plan,
            tuned_critic_config.as_deref(),
            only,
        ),
        Command::Loss(cmd) => loss_cmd(cfg, cmd),
        Command::Report(args) => report(&args),
    }
}

fn open_corpus(path: &Path) -> Result<Corpus> {
    Corpus::open(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn apply_backend_args(cfg: &mut Config, args: &BackendArgs) {
    if let Some(r) = args.rounds {
        cfg.debate.rounds = r;
    }
    if let Some(k) = args.backend {
        cfg.set_backend_kind(k);
    }
    if let Some(n) = args.max_in_flight {
        cfg.debate.max_in_flight = n;
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn corpus_cmd(cfg: &Config, cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Convert {
            input,
            output,
            format,
            name,
            split,
        } => {
            let format = match (format, cfg.corpus.format) {
                (Some(f), _) => f.into(),
                (None, Some(f)) => f,
                (None, None) => bail!("no source format given; pass --format or set [corpus].format"),
            };
            let name = name.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned())
            });
            let split: Split = split.parse()?;
            let reader = BufReader::new(File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let corpus = parse_records(reader, &name, format, &cfg.corpus.fields)?.with_split(split);
            corpus.save(&output)?;
            print_json(&json!({"corpus": corpus.name(), "tasks": corpus.len(), "output": output}))
        }
        CorpusCmd::Split {
            input,
            out_dir,
            test,
            validation,
        } => {
            let corpus = open_corpus(&input)?;
            let (train, val, test) = split_corpus(&corpus, test, validation, cfg.debate.seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut counts = BTreeMap::new();
            for part in [&train, &val, &test] {
                let path = out_dir.join(format!("{}_{}.jsonl", corpus.name(), part.split()));
                part.save(&path)?;
                counts.insert(part.split().to_string(), part.len());
            }
            print_json(&json!({"corpus": corpus.name(), "sizes": counts, "seed": cfg.debate.seed}))
        }
    }
}

fn debate_run(
    mut cfg: Config,
    corpus_path: &Path,
    backend: &BackendArgs,
    seeds: usize,
    out: &Path,
    summary_json: Option<&Path>,
) -> Result<()> {
    apply_backend_args(&mut cfg, backend);
    let corpus = open_corpus(corpus_path)?;
    let debate = cfg.debate_config(&corpus)?;
    let runs = metrics::evaluate_with_trajectories(&corpus, &debate, seeds)?;
    let trajectories: Vec<_> = runs.iter().flat_map(|(_, t)| t.iter().cloned()).collect();
    save_trajectories(out, &trajectories).with_context(|| format!("writing {}", out.display()))?;
    tracing::info!(path = %out.display(), trajectories = trajectories.len(), "wrote trajectories");
    let results: Vec<_> = runs.into_iter().map(|(r, _)| r).collect();
    let summary = metrics::summarize(&results)?;
    print!("{}", render_table(&summary));
    if let Some(path) = summary_json {
        std::fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(())
}

fn phase_of(arg: PhaseArg) -> reward::Phase {
    match arg {
        PhaseArg::Critic => reward::Phase::CriticPhase,
        PhaseArg::Actor => reward::Phase::ActorPhase,
    }
}

fn data_cmd(mut cfg: Config, cmd: DataCmd) -> Result<()> {
    match cmd {
        DataCmd::Generate {
            corpus,
            backend,
            plan,
            phase,
            out,
            triples,
        } => {
            apply_backend_args(&mut cfg, &backend);
            let corpus = open_corpus(&corpus)?;
            let mut gen_plan = cfg.generation.clone();
            plan.apply(&mut gen_plan);
            gen_plan.phase = phase_of(phase);
            gen_plan.seeds.insert("scripted".into(), cfg.scripted.seed);
            let debate = cfg.debate_config(&corpus)?;
            let output = reward::generate_trajectory_dataset(&corpus, &gen_plan, &debate)?;
            let header = DatasetHeader::new(&corpus, &gen_plan, &debate).with_output(&output);
            write_dataset(File::create(&out)?, &header, &output.pairs)?;
            if let Some(path) = triples {
                reward::save_triples(&path, &output.triples)?;
            }
            print_json(&json!({
                "dataset": out,
                "pairs": output.pairs.len(),
                "tasks": output.tasks,
                "failed_tasks": output.failures.len(),
                "epsilon": gen_plan.epsilon,
                "K": gen_plan.rollouts,
            }))
        }
        DataCmd::Replay {
            triples,
            epsilon,
            phase,
            out,
        } => {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                bail!("epsilon must be positive");
            }
            let triples = reward::load_triples(&triples)?;
            let pairs = reward::replay_selection(&triples, epsilon, &[phase_of(phase).role()]);
            if let Some(path) = out {
                let mut w = BufWriter::new(File::create(&path)?);
                for p in &pairs {
                    serde_json::to_writer(&mut w, p)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
            print_json(&json!({"triples": triples.len(), "epsilon": epsilon, "pairs": pairs.len()}))
        }
    }
}

fn phases_run(
    mut cfg: Config,
    corpus_path: &Path,
    out_dir: &Path,
    backend: &BackendArgs,
    plan_args: &PlanArgs,
    tuned_critic: Option<&Path>,
    only: Option<PhaseArg>,
) -> Result<()> {
    apply_backend_args(&mut cfg, backend);
    let corpus = open_corpus(corpus_path)?;
    let mut plan = cfg.generation.clone();
    plan_args.apply(&mut plan);
    plan.seeds.insert("scripted".into(), cfg.scripted.seed);

    let first = cfg.debate_config(&corpus)?;
    let second = match tuned_critic {
        None => first.clone(),
        Some(path) => {
            let tuned = Config::load(Some(path))?;
            let registry = Arc::new(TaskRegistry::from_corpus(&corpus));
            let critic = tuned.backend(&tuned.critic, AgentRole::Critic, &registry)?;
            let mut c = first.clone();
            c.critic = critic;
            c
        }
    };
    let phases: Vec<(reward::Phase, &_)> = match only {
        None => vec![
            (reward::Phase::CriticPhase, &first),
            (reward::Phase::ActorPhase, &second),
        ],
        Some(PhaseArg::Critic) => vec![(reward::Phase::CriticPhase, &first)],
        Some(PhaseArg::Actor) => vec![(reward::Phase::ActorPhase, &second)],
    };
    for (phase, debate) in phases {
        let plan = GenerationPlan { phase, ..plan.clone() };
        let outcome = reward::run_phase(&corpus, &plan, debate, out_dir)?;
        print_json(&json!({
            "phase": phase.as_str(),
            "role": phase.role().as_str(),
            "pairs": outcome.header.pairs,
            "failed_tasks": outcome.header.failed_tasks.len(),
            "dataset": outcome.dataset_path,
        }))?;
    }
    Ok(())
}

fn dpo_params(cfg: &Config, args: &DpoArgs) -> Result<debate_core::DpoParams> {
    let mut p = cfg.dpo;
    if let Some(b) = args.beta {
        p.beta = b;
    }
    if let Some(w) = args.nll_weight {
        p.nll_weight = w;
    }
    p.nll_raw_sum |= args.raw_sum;
    p.validate()?;
    Ok(p)
}

fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<debate_core::PreferencePair>)> {
    let file = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    Ok(read_dataset(BufReader::new(file))?)
}

fn loss_cmd(cfg: Config, cmd: LossCmd) -> Result<()> {
    match cmd {
        LossCmd::Eval { dataset, scores, dpo } => {
            let params = dpo_params(&cfg, &dpo)?;
            let (header, pairs) = load_dataset(&dataset)?;
            let score_file = File::open(&scores).with_context(|| format!("opening scores {}", scores.display()))?;
            let scored = dpo::join_scores(&pairs, &read_scores(BufReader::new(score_file))?)?;
            let report = dpo::batch_report(&scored, &params)?;
            print_json(&json!({
                "dataset": dataset,
                "corpus": header.corpus,
                "phase": header.phase,
                "nll_raw_sum": params.nll_raw_sum,
                "nll_weight": params.nll_weight,
                "report": report,
            }))
        }
        LossCmd::Score { dataset, corpus, out } => {
            let (_, pairs) = load_dataset(&dataset)?;
            let registry = Arc::new(match corpus {
                Some(p) => TaskRegistry::from_corpus(&open_corpus(&p)?),
                None => TaskRegistry::default(),
            });
            let policy_spec = cfg.policy.clone().unwrap_or_else(|| cfg.actor.clone());
            let reference_spec = cfg.reference.clone().unwrap_or_else(|| cfg.actor.clone());
            let policy = cfg.backend(&policy_spec, AgentRole::Actor, &registry)?;
            let reference = cfg.backend(&reference_spec, AgentRole::Actor, &registry)?;
            let scores = dpo::score_pairs(&pairs, policy.as_ref(), reference.as_ref(), cfg.debate.max_in_flight)?;
            write_scores(BufWriter::new(File::create(&out)?), &scores)?;
            print_json(&json!({"scores": out, "pairs": scores.len()}))
        }
        LossCmd::Check { dpo } => {
            let params = dpo_params(&cfg, &dpo)?;
            let deviation = dpo::gradient_check(&params, &default_margin_grid())?;
            print_json(&json!({"beta": params.beta, "max_deviation": deviation, "tolerance": GRADIENT_TOLERANCE}))?;
            if deviation >= GRADIENT_TOLERANCE {
                bail!("gradient check deviation {deviation:e} is not below {GRADIENT_TOLERANCE:e}");
            }
            Ok(())
        }
    }
}

fn report(args: &ReportArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let trajectories = load_trajectories(&args.trajectories)
        .with_context(|| format!("reading trajectories {}", args.trajectories.display()))?;
    let mut by_seed: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for t in trajectories {
        by_seed.entry(t.config.seed).or_default().push(t);
    }
    if by_seed.is_empty() {
        bail!("{} holds no trajectories", args.trajectories.display());
    }
    let runs = by_seed
        .iter()
        .map(|(seed, trajs)| metrics::run_from_trajectories(&corpus, trajs, *seed))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = metrics::summarize(&runs)?;
    print!("{}", render_table(&summary));
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(())
}
