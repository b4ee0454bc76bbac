//! Client for OpenAI-compatible chat-completion services.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, ChatMessage, GenerationRequest, GenerationResult, TokenLogprob};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Jittered exponential delay before retry number `retry` (1-based).
    fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << (retry - 1).min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let jitter = rand::rng().random_range(0.5..=1.0);
        Duration::from_millis((capped * jitter) as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Ask for per-token log-probabilities on every generation.
    pub logprobs: bool,
    /// The service supports prompt echo with log-probabilities on the
    /// legacy completions route, which `score` relies on.
    pub scoring: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            logprobs: false,
            scoring: false,
        }
    }
}

pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

enum Failure {
    Retryable(BackendError),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.retry.attempts == 0 {
            return Err(BackendError::Config("retry.attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            id: format!("remote:{}@{}", config.model, config.endpoint),
            config,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post_once(&self, url: &str, body: &Value, attempt: u32) -> Result<Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            Failure::Retryable(BackendError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })
        })?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .json::<Value>()
                .map_err(|e| Failure::Fatal(BackendError::MalformedResponse(e.to_string())));
        }
        let err = BackendError::Status {
            status: status.as_u16(),
            attempts: attempt,
            body: resp.text().unwrap_or_default(),
        };
        if status.is_server_error() || status.as_u16() == 429 {
            Err(Failure::Retryable(err))
        } else {
            Err(Failure::Fatal(err))
        }
    }

    /// POSTs `body`, retrying transport failures, 5xx and 429 responses.
    fn post(&self, route: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(route);
        let attempts = self.config.retry.attempts;
        let mut attempt = 1;
        loop {
            match self.post_once(&url, body, attempt) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempt >= attempts => return Err(e),
                Err(Failure::Retryable(e)) => {
                    tracing::warn!(attempt, error = %e, "retrying remote request");
                    std::thread::sleep(self.config.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn chat_body(&self, request: &GenerationRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if self.config.logprobs {
            body["logprobs"] = json!(true);
        }
        body
    }
}

fn parse_chat(resp: &Value, backend_id: &str) -> Result<GenerationResult, BackendError> {
    let choice = resp
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::MalformedResponse("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedResponse("first choice has no message content".into()))?
        .to_string();
    let token_logprobs = match choice.pointer("/logprobs/content").and_then(Value::as_array) {
        Some(items) => Some(
            items
                .iter()
                .map(|item| {
                    let token = item.get("token").and_then(Value::as_str);
                    let logprob = item.get("logprob").and_then(Value::as_f64);
                    match (token, logprob) {
                        (Some(token), Some(logprob)) => Ok(TokenLogprob {
                            token: token.to_string(),
                            logprob,
                        }),
                        _ => Err(BackendError::MalformedResponse("bad logprob entry".into())),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    Ok(GenerationResult {
        text,
        token_logprobs,
        backend_id: backend_id.to_string(),
    })
}

/// Flattens chat context for the echo-scoring route: contents joined by a
/// blank line, with a trailing blank line before the target.
pub(crate) fn scoring_prefix(context: &[ChatMessage]) -> String {
    let mut prefix = context
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    prefix.push_str("\n\n");
    prefix
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let resp = self.post("chat/completions", &self.chat_body(request))?;
        parse_chat(&resp, &self.id)
    }

    fn score(&self, context: &[ChatMessage], target: &str) -> Result<f64, BackendError> {
        if !self.config.scoring {
            return Err(BackendError::ScoringUnsupported(self.id.clone()));
        }
        let prefix = scoring_prefix(context);
        let body = json!({
            "model": self.config.model,
            "prompt": format!("{prefix}{target}"),
            "echo": true,
            "max_tokens": 1,
            "logprobs": 0,
            "temperature": 0.0,
        });
        let resp = self.post("completions", &body)?;
        let lp = resp
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| BackendError::ScoringUnsupported(format!("{} (no logprobs in echo response)", self.id)))?;
        let offsets = lp.get("text_offset").and_then(Value::as_array);
        let values = lp.get("token_logprobs").and_then(Value::as_array);
        let (Some(offsets), Some(values)) = (offsets, values) else {
            return Err(BackendError::ScoringUnsupported(format!(
                "{} (echo logprobs lack offsets)",
                self.id
            )));
        };
        let start = prefix.len() as u64;
        let end = start + target.len() as u64;
        let mut total = 0.0;
        for (off, v) in offsets.iter().zip(values) {
            let off = off.as_u64().unwrap_or(0);
            if off >= start && off < end {
                total += v
                    .as_f64()
                    .ok_or_else(|| BackendError::MalformedResponse("null log-probability inside target".into()))?;
            }
        }
        Ok(total)
    }
}
