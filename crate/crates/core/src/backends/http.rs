//! Blocking HTTP backend speaking the common chat-completions and
//! embeddings wire schema.
//!
//! Requests retry on transport failures and 5xx/429 statuses with
//! exponential backoff; other 4xx statuses fail immediately.

use std::time::Duration;

use serde_json::{json, Value};

use crate::backends::{EmbeddingBackend, EmbeddingVector, GenerationBackend, GenerationRequest};
use crate::error::{Error, Result};

/// Connection settings for [`HttpBackend`].
#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to and including the API version segment,
    /// e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    /// Bearer token; omitted from requests when `None`.
    pub api_key: Option<String>,
    pub model: String,
    pub embedding_model: String,
    /// Prepended as a `system` message when set.
    pub system_prompt: Option<String>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

pub const ENV_ENDPOINT: &str = "PURVIEW_ENDPOINT";
pub const ENV_API_KEY: &str = "PURVIEW_API_KEY";
pub const ENV_MODEL: &str = "PURVIEW_MODEL";
pub const ENV_EMBEDDING_MODEL: &str = "PURVIEW_EMBEDDING_MODEL";

impl HttpConfig {
    /// Read the connection settings from `PURVIEW_*` environment variables.
    /// Only the endpoint is required.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| Error::Config(format!("{ENV_ENDPOINT} is not set")))?;
        Ok(HttpConfig {
            endpoint,
            api_key: std::env::var(ENV_API_KEY).ok(),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into()),
            embedding_model: std::env::var(ENV_EMBEDDING_MODEL)
                .unwrap_or_else(|_| "default-embedding".into()),
            system_prompt: None,
            max_attempts: 3,
            timeout_secs: 120,
        })
    }
}

/// Chat-completions request body for one generation call.
pub fn build_chat_body(config: &HttpConfig, req: &GenerationRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &config.system_prompt {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": req.prompt}));
    let mut body = json!({
        "model": config.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    });
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Extract the assistant text from a chat-completions response.
pub fn parse_chat_response(body: &Value) -> Result<String> {
    body["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::Protocol("response has no choices[0].message.content".into()))
}

/// Embeddings request body for one text.
pub fn build_embedding_body(config: &HttpConfig, text: &str) -> Value {
    json!({"model": config.embedding_model, "input": text})
}

/// Extract the vector from an embeddings response.
pub fn parse_embedding_response(body: &Value) -> Result<EmbeddingVector> {
    let raw = body["data"][0]["embedding"]
        .as_array()
        .ok_or_else(|| Error::Protocol("response has no data[0].embedding".into()))?;
    let values = raw
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| Error::Protocol("non-numeric embedding entry".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    EmbeddingVector::new(values)
}

/// Delay before retry attempt `attempt` (1-based): 250ms doubling per attempt.
pub fn backoff_delay(attempt: u32) -> Duration {
    Duration::from_millis(250u64.saturating_mul(1 << attempt.min(6)))
}

/// Live backend over a chat-completions/embeddings endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    /// Embedding dimension, fixed on first successful embed call.
    dim: std::sync::OnceLock<usize>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpBackend { config, client, dim: std::sync::OnceLock::new() })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(HttpConfig::from_env()?)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path);
        let mut last_message = String::new();
        let max_attempts = self.config.max_attempts.max(1);
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                std::thread::sleep(backoff_delay(attempt - 1));
            }
            let mut request = self.client.post(&url).json(body);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<Value>()
                            .map_err(|e| Error::Protocol(format!("bad response body: {e}")));
                    }
                    let text = response.text().unwrap_or_default();
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    if !retryable {
                        return Err(Error::Protocol(format!("{url}: {status}: {text}")));
                    }
                    last_message = format!("{status}: {text}");
                }
                Err(e) => last_message = e.to_string(),
            }
            log::warn!("attempt {attempt}/{max_attempts} against {url} failed: {last_message}");
        }
        Err(Error::Transport { attempts: max_attempts, message: last_message })
    }
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        let body = build_chat_body(&self.config, req);
        let response = self.post("chat/completions", &body)?;
        parse_chat_response(&response)
    }
}

impl EmbeddingBackend for HttpBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let body = build_embedding_body(&self.config, text);
        let response = self.post("embeddings", &body)?;
        let vector = parse_embedding_response(&response)?;
        let dim = *self.dim.get_or_init(|| vector.dim());
        if vector.dim() != dim {
            return Err(Error::Protocol(format!(
                "embedding dimension changed from {dim} to {}",
                vector.dim()
            )));
        }
        Ok(vector)
    }

    fn dim(&self) -> usize {
        self.dim.get().copied().unwrap_or(0)
    }
}
