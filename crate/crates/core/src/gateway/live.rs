//! HTTP backend for chat-completion and embedding endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbedBackend, EmbeddingVector, GatewayError, GenerationRequest, TextGenBackend};

pub const DEFAULT_API_KEY_ENV: &str = "ATARS_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Chat-completion URL.
    pub endpoint: String,
    /// Embeddings URL.
    pub embed_endpoint: String,
    pub model: String,
    pub embed_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Base delay before the single retry on a rate limit.
    pub backoff_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            embed_endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "gpt-4".into(),
            embed_model: "text-embedding-3-small".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            backoff_ms: 2000,
        }
    }
}

/// Synchronous client. A rate-limited call is retried once after a backoff;
/// any other failure is returned immediately.
pub struct LiveBackend {
    cfg: LiveConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn new(cfg: LiveConfig) -> Self {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!(
                "{} is not set; sending requests without credentials",
                cfg.api_key_env
            );
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        LiveBackend {
            cfg,
            agent,
            api_key,
        }
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        match self.post_once(url, body) {
            Err(GatewayError::RateLimited { retry_after_ms }) => {
                let wait = retry_after_ms.unwrap_or(self.cfg.backoff_ms).min(60_000);
                log::warn!("rate limited by {url}; retrying once in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
                self.post_once(url, body)
            }
            other => other,
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after_ms = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .map(|s| (s * 1000.0) as u64);
            return Err(GatewayError::RateLimited { retry_after_ms });
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::BackendUnavailable(format!(
                "HTTP {status}: {}",
                truncate(&text, 200)
            )));
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl TextGenBackend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}", self.cfg.model)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let v = self.post(&self.cfg.endpoint, &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::MalformedResponse("missing choices[0].message.content".into())
            })
    }
}

impl EmbedBackend for LiveBackend {
    fn id(&self) -> String {
        format!("live:{}", self.cfg.embed_model)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = json!({"model": self.cfg.embed_model, "input": text});
        let v = self.post(&self.cfg.embed_endpoint, &body)?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::MalformedResponse("missing data[0].embedding".into()))?;
        let values = arr
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| GatewayError::MalformedResponse("non-numeric embedding".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingVector::normalized(values)
    }
}
