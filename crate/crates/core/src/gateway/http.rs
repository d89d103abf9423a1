use serde::Deserialize;
use serde_json::json;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, RetryPolicy, Usage};

pub const ENV_ENDPOINT: &str = "CONSILIUM_ENDPOINT";
pub const ENV_API_KEY: &str = "CONSILIUM_API_KEY";
pub const ENV_CONCURRENCY: &str = "CONSILIUM_MAX_CONCURRENCY";

/// Counting semaphore shared by every backend clone in the process.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(limit: usize) -> Self {
        ConcurrencyLimiter { limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL such as `https://api.example.com/v1`; `/chat/completions` is appended
    /// unless already present.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_concurrency: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_concurrency: 4,
        }
    }

    /// Reads the endpoint (unless given), credential and concurrency limit
    /// from the environment. Credentials are never taken from any other source.
    pub fn from_env(endpoint: Option<String>) -> Result<Self, GatewayError> {
        let endpoint = match endpoint {
            Some(e) => e,
            None => std::env::var(ENV_ENDPOINT)
                .map_err(|_| GatewayError::Config(format!("no endpoint given and {ENV_ENDPOINT} is unset")))?,
        };
        let mut config = HttpConfig::new(endpoint);
        config.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(raw) = std::env::var(ENV_CONCURRENCY) {
            config.max_concurrency =
                raw.parse().map_err(|_| GatewayError::Config(format!("{ENV_CONCURRENCY}={raw} is not a count")))?;
        }
        Ok(config)
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Live backend for OpenAI-compatible chat-completion endpoints.
#[derive(Clone)]
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    limiter: Arc<ConcurrencyLimiter>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(ChatResponse),
    Retry { error: GatewayError, retry_after: Option<Duration> },
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let limiter = Arc::new(ConcurrencyLimiter::new(config.max_concurrency));
        Self::with_limiter(config, limiter)
    }

    /// Shares an existing limiter, so several backends respect one global cap.
    pub fn with_limiter(config: HttpConfig, limiter: Arc<ConcurrencyLimiter>) -> Result<Self, GatewayError> {
        if config.retry.max_attempts == 0 {
            return Err(GatewayError::Config("retry cap must allow at least one attempt".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend { config, client, limiter })
    }

    pub fn limiter(&self) -> Arc<ConcurrencyLimiter> {
        Arc::clone(&self.limiter)
    }

    fn attempt(&self, request: &ChatRequest, attempt: u32) -> Attempt {
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stream": false,
        });
        let mut builder = self.client.post(self.config.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry { error: GatewayError::Timeout { attempts: attempt }, retry_after: None }
            }
            Err(e) if e.is_connect() => {
                return Attempt::Retry { error: GatewayError::Transport(e.to_string()), retry_after: None }
            }
            Err(e) => return Attempt::Fatal(GatewayError::Transport(e.to_string())),
        };

        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry { error: GatewayError::Timeout { attempts: attempt }, retry_after: None }
            }
            Err(e) => return Attempt::Fatal(GatewayError::Transport(e.to_string())),
        };

        match status {
            200..=299 => match parse_wire(&text) {
                Ok(mut r) => {
                    r.attempt_count = attempt;
                    Attempt::Done(r)
                }
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(GatewayError::Unauthorized(truncate(&text))),
            429 => Attempt::Retry { error: GatewayError::RateLimited { attempts: attempt }, retry_after },
            500..=599 => Attempt::Retry {
                error: GatewayError::Upstream { status, attempts: attempt, body: truncate(&text) },
                retry_after,
            },
            _ => Attempt::Fatal(GatewayError::Upstream { status, attempts: attempt, body: truncate(&text) }),
        }
    }
}

fn truncate(text: &str) -> String {
    text.chars().take(500).collect()
}

fn parse_wire(text: &str) -> Result<ChatResponse, GatewayError> {
    let wire: WireResponse =
        serde_json::from_str(text).map_err(|e| GatewayError::MalformedUpstreamResponse(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedUpstreamResponse("response has no choices".into()))?;
    let content = choice
        .message
        .content
        .ok_or_else(|| GatewayError::MalformedUpstreamResponse("choice has no message content".into()))?;
    let usage = wire
        .usage
        .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
        .unwrap_or_default();
    Ok(ChatResponse {
        content,
        finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
        usage,
        latency: Duration::ZERO,
        attempt_count: 1,
    })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let cap = self.config.retry.max_attempts;
        let mut attempt = 1;
        loop {
            match self.attempt(request, attempt) {
                Attempt::Done(mut response) => {
                    response.latency = started.elapsed();
                    return Ok(response);
                }
                Attempt::Fatal(error) => return Err(error),
                Attempt::Retry { error, retry_after } => {
                    if attempt >= cap {
                        return Err(error);
                    }
                    let wait = self.config.retry.delay(attempt, retry_after);
                    tracing::warn!(tag = %request.request_tag, attempt, ?wait, %error, "retrying");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("http:{}", self.config.url())
    }
}
