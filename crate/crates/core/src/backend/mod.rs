//! Uniform generation and scoring interface over language-model backends.

mod remote;
mod scripted;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};
pub use scripted::{AgentRole, ScriptedAgentParams, ScriptedBackend, ScriptedScorer, TaskRegistry, Team};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned status {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("backend `{0}` does not support sequence scoring")]
    ScoringUnsupported(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        GenerationRequest {
            messages,
            temperature: 1.0,
            max_tokens: 512,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("messages must not be empty".into()));
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(BackendError::InvalidRequest(format!("message {i} has empty content")));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Concatenation of all message roles and contents; the scripted agent
    /// keys its randomness on the hash of this.
    pub fn content_fingerprint(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(match m.role {
                ChatRole::System => "system\u{1f}",
                ChatRole::User => "user\u{1f}",
                ChatRole::Assistant => "assistant\u{1f}",
            });
            out.push_str(&m.content);
            out.push('\u{1e}');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    pub backend_id: String,
}

/// A language-model backend. Handles are shared across threads.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Produces exactly one completion. Callers go through [`generate`],
    /// which validates the request first.
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;

    /// Total log-probability of `target` given `context`.
    fn score(&self, context: &[ChatMessage], target: &str) -> Result<f64, BackendError> {
        let _ = (context, target);
        Err(BackendError::ScoringUnsupported(self.id().to_string()))
    }
}

pub fn generate(backend: &dyn Backend, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
    request.validate()?;
    let result = backend.complete(request)?;
    if let Some(lp) = &result.token_logprobs {
        if let Some(bad) = lp.iter().find(|t| t.logprob.is_nan() || t.logprob > 0.0) {
            return Err(BackendError::MalformedResponse(format!(
                "token `{}` has log-probability {}",
                bad.token, bad.logprob
            )));
        }
    }
    Ok(result)
}

/// Runs `requests` with at most `max_in_flight` outstanding at once.
///
/// Results are returned in request order; failures are reported per index.
pub fn generate_batch(
    backend: &dyn Backend,
    requests: &[GenerationRequest],
    max_in_flight: usize,
) -> Vec<Result<GenerationResult, BackendError>> {
    bounded_map(requests, max_in_flight, |req| generate(backend, req))
}

/// Maps `f` over `items` on at most `max_in_flight` worker threads,
/// preserving input order in the output.
pub fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_in_flight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("result slot poisoned")
                .expect("every slot filled")
        })
        .collect()
}

/// Sum of target-token log-probabilities; always ≤ 0.
pub fn score_sequence(backend: &dyn Backend, context: &[ChatMessage], target: &str) -> Result<f64, BackendError> {
    let lp = backend.score(context, target)?;
    if !lp.is_finite() || lp > 0.0 {
        return Err(BackendError::MalformedResponse(format!(
            "sequence log-probability {lp} is not a finite value ≤ 0"
        )));
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    /// Echoes the first message after a delay derived from its content.
    struct Delayed {
        in_flight: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Delayed {
        fn id(&self) -> &str {
            "delayed"
        }

        fn complete(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            let ms: u64 = request.messages[0].content.parse::<u64>().unwrap_or(0);
            std::thread::sleep(Duration::from_millis(ms));
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            Ok(GenerationResult {
                text: request.messages[0].content.clone(),
                token_logprobs: None,
                backend_id: "delayed".into(),
            })
        }
    }

    fn req(content: &str) -> GenerationRequest {
        GenerationRequest::new(vec![ChatMessage::user(content)])
    }

    #[test]
    fn batch_preserves_order_and_bound() {
        let backend = Delayed {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        let delays = [9u64, 1, 7, 3, 5, 0, 8, 2, 6, 4];
        let requests: Vec<_> = delays.iter().map(|d| req(&d.to_string())).collect();
        let results = generate_batch(&backend, &requests, 3);
        assert_eq!(results.len(), 10);
        for (d, r) in delays.iter().zip(&results) {
            assert_eq!(r.as_ref().unwrap().text, d.to_string());
        }
        assert!(backend.peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn poisoned_request_fails_alone() {
        let backend = Delayed {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        let mut requests: Vec<_> = (0..5).map(|_| req("0")).collect();
        requests[2].messages.clear();
        let results = generate_batch(&backend, &requests, 2);
        for (i, r) in results.iter().enumerate() {
            assert_eq!(r.is_err(), i == 2);
        }
        assert!(matches!(results[2], Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn request_validation() {
        assert!(req("x").validate().is_ok());
        assert!(req("").validate().is_err());
        assert!(req("x").with_temperature(2.5).validate().is_err());
        assert!(req("x").with_temperature(-0.1).validate().is_err());
        assert!(req("x").with_max_tokens(0).validate().is_err());
    }

    #[test]
    fn default_backend_cannot_score() {
        let backend = Delayed {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        assert!(matches!(
            score_sequence(&backend, &[ChatMessage::user("x")], "y"),
            Err(BackendError::ScoringUnsupported(_))
        ));
    }
}
