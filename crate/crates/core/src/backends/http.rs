//! OpenAI-style chat-completion client.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::retry::RetryPolicy;
use super::{Backend, BackendError, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Connect(String),
    Other(String),
}

/// One HTTP POST carrying a JSON body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<TransportResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<TransportResponse, TransportError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(e.to_string())
            } else if e.is_connect() || e.is_request() {
                TransportError::Connect(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout(e.to_string())
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        Ok(TransportResponse {
            status,
            body,
            retry_after,
        })
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct HttpBackend<T: Transport = ReqwestTransport> {
    config: HttpConfig,
    transport: T,
    api_key: Option<String>,
    sleep: Sleeper,
}

impl HttpBackend<ReqwestTransport> {
    pub fn from_config(config: HttpConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::InvalidRequest(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let transport = ReqwestTransport::new(Duration::from_millis(config.timeout_ms))?;
        Ok(Self::with_transport(config, transport, api_key))
    }
}

impl<T: Transport> HttpBackend<T> {
    pub fn with_transport(config: HttpConfig, transport: T, api_key: Option<String>) -> Self {
        HttpBackend {
            config,
            transport,
            api_key,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn request_body(&self, req: &CompletionRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<(String, Option<Duration>), (BackendError, Option<Duration>)> {
        match self.transport.post_json(url, self.api_key.as_deref(), body) {
            Ok(resp) => match resp.status {
                200..=299 => Ok((resp.body, None)),
                401 | 403 => Err((
                    BackendError::Auth {
                        status: resp.status,
                        message: resp.body,
                    },
                    None,
                )),
                429 | 500..=599 => Err((
                    BackendError::Transient(format!("HTTP {}: {}", resp.status, resp.body)),
                    resp.retry_after,
                )),
                status => Err((
                    BackendError::Permanent {
                        status,
                        message: resp.body,
                    },
                    None,
                )),
            },
            Err(TransportError::Timeout(m)) => Err((BackendError::Transient(format!("timeout: {m}")), None)),
            Err(TransportError::Connect(m)) => Err((BackendError::Transient(format!("connect: {m}")), None)),
            Err(TransportError::Other(m)) => Err((BackendError::Transient(m), None)),
        }
    }
}

impl<T: Transport> Backend for HttpBackend<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.validate()?;
        let url = self.url();
        let body = self.request_body(req);
        let started = Instant::now();
        let mut retries = 0;
        loop {
            match self.attempt(&url, &body) {
                Ok((text, _)) => {
                    let mut resp = parse_chat_response(&text)?;
                    resp.latency_ms = started.elapsed().as_millis() as u64;
                    resp.retries = retries;
                    return Ok(resp);
                }
                Err((err, retry_after)) if err.is_transient() => {
                    if retries >= self.config.retry.max_retries {
                        return Err(BackendError::RetryExhausted {
                            attempts: retries + 1,
                            last: err.to_string(),
                        });
                    }
                    retries += 1;
                    let delay = self.config.retry.delay(retries, retry_after);
                    tracing::debug!(tier = %req.tier_id, retry = retries, ?delay, error = %err, "retrying completion");
                    (self.sleep)(delay);
                }
                Err((err, _)) => return Err(err),
            }
        }
    }
}

#[derive(Deserialize)]
struct ChatBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_chat_response(text: &str) -> Result<CompletionResponse, BackendError> {
    let body: ChatBody = serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = body
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Malformed("no choices".to_string()))?;
    let usage = body.usage.unwrap_or_default();
    Ok(CompletionResponse {
        raw_text: choice.message.content.unwrap_or_default(),
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        latency_ms: 0,
        finish_reason: choice.finish_reason,
        retries: 0,
    })
}
