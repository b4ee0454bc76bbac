//! Prompt templates for natural and guided actor/critic turns.
//!
//! Defaults are compiled in from `templates/`; a directory with the same
//! layout (`<kind>/<slot>.txt`) can override any subset of them.

use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ChatMessage;
use crate::corpus::{AnswerKey, Task, TaskKind};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0:?} guidance requires a target answer")]
    MissingTarget(GuidanceMode),
    #[error("natural guidance must not carry a target answer")]
    UnexpectedTarget,
    #[error("target answer `{target}` is not a valid answer for task `{task}`")]
    InvalidTarget { task: String, target: String },
    #[error("actor response must not be empty")]
    EmptyActorResponse,
    #[error("task `{0}` has fewer than two choices; no wrong target exists")]
    NoWrongTarget(String),
    #[error("template `{template}` references unknown placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("template `{template}` is missing required placeholder `{{{placeholder}}}`")]
    MissingPlaceholder { template: String, placeholder: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    Natural,
    Toward,
    Away,
}

/// How a turn is steered: naturally, or toward/away from a target answer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoleGuidance {
    pub mode: GuidanceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<AnswerKey>,
}

impl RoleGuidance {
    pub fn natural() -> Self {
        RoleGuidance {
            mode: GuidanceMode::Natural,
            target: None,
        }
    }

    pub fn toward(target: AnswerKey) -> Self {
        RoleGuidance {
            mode: GuidanceMode::Toward,
            target: Some(target),
        }
    }

    pub fn away(target: AnswerKey) -> Self {
        RoleGuidance {
            mode: GuidanceMode::Away,
            target: Some(target),
        }
    }

    pub fn is_guided(&self) -> bool {
        self.mode != GuidanceMode::Natural
    }

    /// Returns the target for guided modes after checking it belongs to the
    /// task's answer space.
    pub fn validated_target(&self, task: &Task) -> Result<Option<&AnswerKey>, PromptError> {
        match (self.mode, &self.target) {
            (GuidanceMode::Natural, None) => Ok(None),
            (GuidanceMode::Natural, Some(_)) => Err(PromptError::UnexpectedTarget),
            (mode, None) => Err(PromptError::MissingTarget(mode)),
            (_, Some(t)) => {
                if task.answer_space().contains(t) {
                    Ok(Some(t))
                } else {
                    Err(PromptError::InvalidTarget {
                        task: task.id.clone(),
                        target: t.to_string(),
                    })
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    ActorSingle,
    ActorSingleGuided,
    ActorDebate,
    ActorDebateGuided,
    Critic,
    CriticGuided,
}

impl Slot {
    pub const ALL: [Slot; 6] = [
        Slot::ActorSingle,
        Slot::ActorSingleGuided,
        Slot::ActorDebate,
        Slot::ActorDebateGuided,
        Slot::Critic,
        Slot::CriticGuided,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            Slot::ActorSingle => "actor_single",
            Slot::ActorSingleGuided => "actor_single_guided",
            Slot::ActorDebate => "actor_debate",
            Slot::ActorDebateGuided => "actor_debate_guided",
            Slot::Critic => "critic",
            Slot::CriticGuided => "critic_guided",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Slot::ActorSingle => &["question"],
            Slot::ActorSingleGuided => &["question", "target_answer"],
            Slot::ActorDebate => &["question", "responses"],
            Slot::ActorDebateGuided => &["question", "responses", "target_answer"],
            Slot::Critic => &["question", "actor_response"],
            Slot::CriticGuided => &["question", "actor_response", "target_answer"],
        }
    }
}

const PLACEHOLDERS: [&str; 7] = [
    "question",
    "passage",
    "passage_line",
    "choices",
    "responses",
    "target_answer",
    "actor_response",
];

fn kind_dir(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::YesNo => "yes_no",
        TaskKind::MultiChoice => "multi_choice",
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

#[derive(Clone, Copy)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name_ok = close.is_some_and(|c| c > 0 && after[..c].chars().all(|ch| ch.is_ascii_lowercase() || ch == '_'));
        if !name_ok {
            out.push(Piece::Text(&rest[..open + 1]));
            rest = after;
            continue;
        }
        let close = close.unwrap();
        out.push(Piece::Text(&rest[..open]));
        out.push(Piece::Slot(&after[..close]));
        rest = &after[close + 1..];
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        PromptTemplate {
            name: name.into(),
            body: body.into(),
        }
    }

    pub fn placeholders(&self) -> Vec<&str> {
        pieces(&self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }

    fn check(&self, slot: Slot) -> Result<(), PromptError> {
        let used = self.placeholders();
        if let Some(unknown) = used.iter().find(|p| !PLACEHOLDERS.contains(p)) {
            return Err(PromptError::UnknownPlaceholder {
                template: self.name.clone(),
                placeholder: unknown.to_string(),
            });
        }
        if let Some(missing) = slot.required().iter().find(|r| !used.contains(r)) {
            return Err(PromptError::MissingPlaceholder {
                template: self.name.clone(),
                placeholder: missing.to_string(),
            });
        }
        Ok(())
    }

    /// Single-pass substitution; filled values are never re-scanned.
    pub fn fill(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in pieces(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match lookup(name) {
                    Some(v) => out.push_str(&v),
                    None => {
                        return Err(PromptError::UnknownPlaceholder {
                            template: self.name.clone(),
                            placeholder: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

/// The full template set for both task kinds.
#[derive(Clone, Debug)]
pub struct PromptKit {
    yes_no: [PromptTemplate; 6],
    multi_choice: [PromptTemplate; 6],
}

macro_rules! embedded {
    ($kind:literal) => {
        [
            PromptTemplate::new(
                concat!($kind, "/actor_single"),
                include_str!(concat!("../templates/", $kind, "/actor_single.txt")),
            ),
            PromptTemplate::new(
                concat!($kind, "/actor_single_guided"),
                include_str!(concat!("../templates/", $kind, "/actor_single_guided.txt")),
            ),
            PromptTemplate::new(
                concat!($kind, "/actor_debate"),
                include_str!(concat!("../templates/", $kind, "/actor_debate.txt")),
            ),
            PromptTemplate::new(
                concat!($kind, "/actor_debate_guided"),
                include_str!(concat!("../templates/", $kind, "/actor_debate_guided.txt")),
            ),
            PromptTemplate::new(
                concat!($kind, "/critic"),
                include_str!(concat!("../templates/", $kind, "/critic.txt")),
            ),
            PromptTemplate::new(
                concat!($kind, "/critic_guided"),
                include_str!(concat!("../templates/", $kind, "/critic_guided.txt")),
            ),
        ]
    };
}

impl Default for PromptKit {
    fn default() -> Self {
        PromptKit {
            yes_no: embedded!("yes_no"),
            multi_choice: embedded!("multi_choice"),
        }
    }
}

impl PromptKit {
    /// Starts from the embedded defaults and replaces every template found
    /// under `dir/<kind>/<slot>.txt`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut kit = PromptKit::default();
        for kind in [TaskKind::YesNo, TaskKind::MultiChoice] {
            for slot in Slot::ALL {
                let path = dir.join(kind_dir(kind)).join(format!("{}.txt", slot.file_stem()));
                if !path.exists() {
                    continue;
                }
                let body = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let body = body.strip_suffix('\n').unwrap_or(&body);
                let template = PromptTemplate::new(format!("{}/{}", kind_dir(kind), slot.file_stem()), body);
                template.check(slot)?;
                *kit.slot_mut(kind, slot) = template;
            }
        }
        Ok(kit)
    }

    pub fn template(&self, kind: TaskKind, slot: Slot) -> &PromptTemplate {
        let set = match kind {
            TaskKind::YesNo => &self.yes_no,
            TaskKind::MultiChoice => &self.multi_choice,
        };
        &set[slot as usize]
    }

    fn slot_mut(&mut self, kind: TaskKind, slot: Slot) -> &mut PromptTemplate {
        let set = match kind {
            TaskKind::YesNo => &mut self.yes_no,
            TaskKind::MultiChoice => &mut self.multi_choice,
        };
        &mut set[slot as usize]
    }

    fn render(
        &self,
        task: &Task,
        slot: Slot,
        responses: Option<(&str, &str)>,
        target: Option<&AnswerKey>,
        actor_response: Option<&str>,
    ) -> Result<String, PromptError> {
        self.template(task.kind, slot).fill(|name| match name {
            "question" => Some(task.question.clone()),
            "passage" => Some(task.passage.clone().unwrap_or_default()),
            "passage_line" => Some(
                task.passage
                    .as_ref()
                    .map(|p| format!("\nPassage: {p}"))
                    .unwrap_or_default(),
            ),
            "choices" => Some(render_choices(task)),
            "responses" => responses.map(|(a, c)| format!("\nPerson 1 said: {a}\nPerson 2 said: {c}")),
            "target_answer" => target.map(AnswerKey::display_token),
            "actor_response" => actor_response.map(str::to_string),
            _ => None,
        })
    }

    /// Actor prompt for one turn. Without `prior` this is the opening turn;
    /// with it, the previous actor response and critic feedback are listed
    /// as Person 1 and Person 2.
    pub fn render_actor_prompt(
        &self,
        task: &Task,
        prior: Option<(&str, &str)>,
        guidance: &RoleGuidance,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        let target = guidance.validated_target(task)?;
        let slot = match (prior.is_some(), target.is_some()) {
            (false, false) => Slot::ActorSingle,
            (false, true) => Slot::ActorSingleGuided,
            (true, false) => Slot::ActorDebate,
            (true, true) => Slot::ActorDebateGuided,
        };
        let text = self.render(task, slot, prior, target, None)?;
        Ok(vec![ChatMessage::user(text)])
    }

    pub fn render_critic_prompt(
        &self,
        task: &Task,
        actor_response: &str,
        guidance: &RoleGuidance,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        if actor_response.trim().is_empty() {
            return Err(PromptError::EmptyActorResponse);
        }
        let target = guidance.validated_target(task)?;
        let slot = if target.is_some() {
            Slot::CriticGuided
        } else {
            Slot::Critic
        };
        let text = self.render(task, slot, None, target, Some(actor_response))?;
        Ok(vec![ChatMessage::user(text)])
    }
}

fn render_choices(task: &Task) -> String {
    task.choices
        .iter()
        .map(|c| format!("({}) {}", c.label, c.text))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Picks the "away" target: the negated key for yes/no, otherwise a
/// seeded uniform draw over the wrong labels.
pub fn choose_wrong_target(task: &Task, seed: u64) -> Result<AnswerKey, PromptError> {
    match task.kind {
        TaskKind::YesNo => Ok(if task.answer_key == AnswerKey::yes() {
            AnswerKey::no()
        } else {
            AnswerKey::yes()
        }),
        TaskKind::MultiChoice => {
            let wrong: Vec<&AnswerKey> = task
                .choices
                .iter()
                .map(|c| &c.label)
                .filter(|l| **l != task.answer_key)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            wrong
                .choose(&mut rng)
                .map(|k| (*k).clone())
                .ok_or_else(|| PromptError::NoWrongTarget(task.id.clone()))
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceMode::Natural => "natural",
            GuidanceMode::Toward => "toward",
            GuidanceMode::Away => "away",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boolq() -> Task {
        Task::yes_no("b1", "is the sky blue", Some("The sky is blue.".into()), true)
    }

    fn mc() -> Task {
        Task::multi_choice(
            "m1",
            "A sperm and an egg combine to form a",
            None,
            vec!["gamete".into(), "ovum".into(), "nucleus".into(), "zygote".into()],
            3,
        )
        .unwrap()
    }

    fn text(messages: Vec<ChatMessage>) -> String {
        assert_eq!(messages.len(), 1);
        messages.into_iter().next().unwrap().content
    }

    // Golden skeletons: the appendix string literals concatenated exactly
    // as Python would, with the placeholders filled.
    #[test]
    fn golden_single_shot() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::natural())
                .unwrap(),
        );
        assert_eq!(
            got,
            "You will be given a yes-no question which is based on a passage. You should use the passage to help you answer the question. You should give a brief justification for your answer, and you must provide a final answer of either Yes or No.\nQuestion: is the sky blue?\nPassage: The sky is blue."
        );
    }

    #[test]
    fn golden_guided_single_shot() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::toward(AnswerKey::yes()))
                .unwrap(),
        );
        assert_eq!(
            got,
            "You will be given a yes-no question which is based on a passage. You should use the passage to help you answer the question with a Yes. You should give a brief justification for your answer of Yes, and you must state that your final answer is Yes.\nQuestion: is the sky blue?\nPassage: The sky is blue."
        );
    }

    #[test]
    fn golden_actor_debate() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_actor_prompt(&boolq(), Some(("A1", "C1")), &RoleGuidance::natural())
                .unwrap(),
        );
        assert_eq!(
            got,
            "Several people have provided answers to a yes-no question. Below are their responses:\nPerson 1 said: A1\nPerson 2 said: C1\n\nYou should take these answers into consideration when answering the following yes-no question, which is based on a passage. You should give a brief justification for your answer, and you must provide a final answer of either Yes or No.\nQuestion: is the sky blue\nPassage: The sky is blue."
        );
    }

    #[test]
    fn golden_guided_actor_debate() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_actor_prompt(&boolq(), Some(("A1", "C1")), &RoleGuidance::away(AnswerKey::no()))
                .unwrap(),
        );
        assert_eq!(
            got,
            "Several people have provided answers to a yes-no question. Below are their responses:\nPerson 1 said: A1\nPerson 2 said: C1You should take these answers and the passage into consideration when answering the following question with No. You should give a brief justification for your answer of No, and you must state that your final answer is No.\nQuestion: is the sky blue\nPassage: The sky is blue."
        );
    }

    #[test]
    fn golden_critic() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_critic_prompt(&boolq(), "Yes, it is.", &RoleGuidance::natural())
                .unwrap(),
        );
        assert_eq!(
            got,
            "I am answering a question based on a passage. I would like you to help me improve the correctness of my response by briefly providing some additional details my original response may have missed. \nQuestion: is the sky blue\nPassage: The sky is blue.\nMy Response: Yes, it is."
        );
    }

    #[test]
    fn golden_guided_critic() {
        let kit = PromptKit::default();
        let got = text(
            kit.render_critic_prompt(&boolq(), "Yes, it is.", &RoleGuidance::toward(AnswerKey::no()))
                .unwrap(),
        );
        assert_eq!(
            got,
            "I would like you to be a debate assistant. You will be given a question based on a passage and my response to the question. You should use the passage and my response to develop additional details for why the correct answer is No. Your details must be brief and must support the fact that the correct answer is No.\nQuestion: is the sky blue?\nPassage: The sky is blue.\nMy Response: Yes, it is."
        );
    }

    #[test]
    fn spec_examples() {
        let kit = PromptKit::default();
        let single = text(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::natural())
                .unwrap(),
        );
        assert!(single.contains("final answer of either Yes or No"));
        let debate = text(
            kit.render_actor_prompt(&boolq(), Some(("a", "c")), &RoleGuidance::natural())
                .unwrap(),
        );
        assert!(debate.contains("Person 1 said: a") && debate.contains("Person 2 said: c"));
        let guided = text(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::toward(AnswerKey::yes()))
                .unwrap(),
        );
        assert!(guided.contains("your final answer is Yes"));
        let critic = text(
            kit.render_critic_prompt(&boolq(), "my text", &RoleGuidance::natural())
                .unwrap(),
        );
        assert!(critic.contains("My Response: my text"));
        let guided_critic = text(
            kit.render_critic_prompt(&boolq(), "my text", &RoleGuidance::toward(AnswerKey::no()))
                .unwrap(),
        );
        assert!(guided_critic.contains("the correct answer is No"));
    }

    #[test]
    fn guidance_errors() {
        let kit = PromptKit::default();
        let missing = RoleGuidance {
            mode: GuidanceMode::Toward,
            target: None,
        };
        assert!(matches!(
            kit.render_actor_prompt(&boolq(), None, &missing),
            Err(PromptError::MissingTarget(GuidanceMode::Toward))
        ));
        assert!(matches!(
            kit.render_critic_prompt(
                &boolq(),
                "x",
                &RoleGuidance {
                    mode: GuidanceMode::Away,
                    target: None
                }
            ),
            Err(PromptError::MissingTarget(GuidanceMode::Away))
        ));
        assert!(matches!(
            kit.render_critic_prompt(&boolq(), "", &RoleGuidance::natural()),
            Err(PromptError::EmptyActorResponse)
        ));
        assert!(matches!(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::toward(AnswerKey::letter(0))),
            Err(PromptError::InvalidTarget { .. })
        ));
    }

    #[test]
    fn multi_choice_prompts() {
        let kit = PromptKit::default();
        let single = text(kit.render_actor_prompt(&mc(), None, &RoleGuidance::natural()).unwrap());
        assert!(single.contains("provide a final answer as one of the choice letters"));
        assert!(single.contains("(A) gamete (B) ovum (C) nucleus (D) zygote"));
        assert!(!single.contains("Passage:"));
        let guided = text(
            kit.render_actor_prompt(&mc(), Some(("x", "y")), &RoleGuidance::toward(AnswerKey::letter(3)))
                .unwrap(),
        );
        assert!(guided.contains("your final answer is (D)"));
    }

    #[test]
    fn wrong_target() {
        assert_eq!(choose_wrong_target(&boolq(), 1).unwrap(), AnswerKey::no());
        let t = mc();
        let first = choose_wrong_target(&t, 42).unwrap();
        assert_ne!(first, t.answer_key);
        assert!(["A", "B", "C"].contains(&first.as_str()));
        for _ in 0..5 {
            assert_eq!(choose_wrong_target(&t, 42).unwrap(), first);
        }
        let seen: std::collections::HashSet<_> = (0..64).map(|s| choose_wrong_target(&t, s).unwrap()).collect();
        assert_eq!(seen.len(), 3);
        let single = Task::multi_choice("s", "q", None, vec!["only".into()], 0).unwrap();
        assert!(matches!(
            choose_wrong_target(&single, 0),
            Err(PromptError::NoWrongTarget(_))
        ));
    }

    #[test]
    fn no_unresolved_placeholders() {
        let kit = PromptKit::default();
        let gold = AnswerKey::yes();
        for task in [boolq(), mc()] {
            let target = task.answer_key.clone();
            for g in [RoleGuidance::natural(), RoleGuidance::toward(target.clone())] {
                for prior in [None, Some(("a", "b"))] {
                    let t = text(kit.render_actor_prompt(&task, prior, &g).unwrap());
                    for p in PLACEHOLDERS {
                        assert!(!t.contains(&format!("{{{p}}}")), "{t}");
                    }
                }
                let t = text(kit.render_critic_prompt(&task, "resp", &g).unwrap());
                for p in PLACEHOLDERS {
                    assert!(!t.contains(&format!("{{{p}}}")), "{t}");
                }
            }
        }
        let _ = gold;
    }

    /// Guided and natural renders share everything from the question line
    /// onward; only the instruction block differs. The critic pair differs
    /// additionally by the trailing "?" that the guided wording appends to
    /// the question.
    #[test]
    fn guided_diff_confined_to_instructions() {
        let kit = PromptKit::default();
        for task in [boolq(), mc()] {
            let target = task.answer_key.clone();
            for prior in [None, Some(("a", "b"))] {
                let n = text(kit.render_actor_prompt(&task, prior, &RoleGuidance::natural()).unwrap());
                let g = text(
                    kit.render_actor_prompt(&task, prior, &RoleGuidance::toward(target.clone()))
                        .unwrap(),
                );
                let tail = |s: &str| s[s.find("\nQuestion:").unwrap()..].to_string();
                assert_eq!(tail(&n), tail(&g));
                if let Some((a, c)) = prior {
                    let block = format!("\nPerson 1 said: {a}\nPerson 2 said: {c}");
                    assert!(n.contains(&block) && g.contains(&block));
                }
            }
            let n = text(
                kit.render_critic_prompt(&task, "resp", &RoleGuidance::natural())
                    .unwrap(),
            );
            let g = text(
                kit.render_critic_prompt(&task, "resp", &RoleGuidance::toward(target.clone()))
                    .unwrap(),
            );
            let tail = |s: &str| s[s.find("\nMy Response:").unwrap()..].to_string();
            assert_eq!(tail(&n), tail(&g));
            let q = |s: &str| s[s.find("\nQuestion:").unwrap()..s.find("\nMy Response:").unwrap()].replace('?', "");
            assert_eq!(q(&n), q(&g));
        }
    }

    #[test]
    fn directory_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("yes_no")).unwrap();
        std::fs::write(
            dir.path().join("yes_no/actor_single.txt"),
            "Answer yes or no: {question}\n",
        )
        .unwrap();
        let kit = PromptKit::from_dir(dir.path()).unwrap();
        let t = text(
            kit.render_actor_prompt(&boolq(), None, &RoleGuidance::natural())
                .unwrap(),
        );
        assert_eq!(t, "Answer yes or no: is the sky blue");
        let critic = text(
            kit.render_critic_prompt(&boolq(), "r", &RoleGuidance::natural())
                .unwrap(),
        );
        assert!(critic.starts_with("I am answering a question"));

        std::fs::write(dir.path().join("yes_no/critic.txt"), "{question} {bogus}").unwrap();
        assert!(matches!(
            PromptKit::from_dir(dir.path()),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        std::fs::write(dir.path().join("yes_no/critic.txt"), "{question}").unwrap();
        assert!(matches!(
            PromptKit::from_dir(dir.path()),
            Err(PromptError::MissingPlaceholder { .. })
        ));
    }

    #[test]
    fn embedded_templates_are_well_formed() {
        let kit = PromptKit::default();
        for kind in [TaskKind::YesNo, TaskKind::MultiChoice] {
            for slot in Slot::ALL {
                kit.template(kind, slot).check(slot).unwrap();
            }
        }
    }
}
