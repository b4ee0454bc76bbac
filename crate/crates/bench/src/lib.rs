//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use debate_core::{Corpus, DebateConfig, ScriptedAgentParams, ScriptedBackend, Split, Task, TaskRegistry};

/// A yes/no corpus of `n` synthetic tasks with alternating gold answers.
pub fn synthetic_corpus(n: usize) -> Corpus {
    let tasks = (0..n)
        .map(|i| {
            Task::yes_no(
                format!("b{i:05}"),
                format!("does benchmark case {i} hold"),
                None,
                i % 2 == 0,
            )
        })
        .collect();
    Corpus::new("bench", Split::Test, tasks).expect("generated ids are unique")
}

/// A scripted actor/critic team that knows every task in `corpus`.
pub fn scripted_team(params: ScriptedAgentParams, corpus: &Corpus) -> DebateConfig {
    let registry = Arc::new(TaskRegistry::from_corpus(corpus));
    let (actor, critic) = ScriptedBackend::team(params, registry).expect("valid scripted params");
    DebateConfig::new(actor, critic)
}
