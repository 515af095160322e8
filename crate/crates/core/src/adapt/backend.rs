//! Chat backends: a deterministic echo stub for tests and offline use, and
//! an HTTP client for OpenAI-compatible chat-completion endpoints.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::ChatRequest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend returned an unusable response: {0}")]
    BadResponse(String),
    #[error("backend config: {0}")]
    Config(String),
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;

    /// Cheap startup probe; the default assumes the backend is local.
    fn check_reachable(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

/// Replies with `[directive_id] user_msg`. No I/O, fully deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl ChatBackend for EchoBackend {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        Ok(format!("[{}] {}", req.directive_id, req.user_msg))
    }
}

pub const ENV_ENDPOINT: &str = "NEUROADAPT_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "NEUROADAPT_LLM_MODEL";
pub const ENV_API_KEY: &str = "NEUROADAPT_LLM_API_KEY";
pub const ENV_TIMEOUT_S: &str = "NEUROADAPT_LLM_TIMEOUT_S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_s: f64,
    pub retries: u32,
    pub temperature: f64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key: None,
            timeout_s: 30.0,
            retries: 1,
            temperature: 0.7,
        }
    }
}

impl HttpBackendConfig {
    /// Overrides fields from `NEUROADAPT_LLM_*` variables when set.
    pub fn with_env(mut self) -> Result<Self, BackendError> {
        self.apply_env(|k| std::env::var(k).ok())?;
        Ok(self)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), BackendError> {
        if let Some(v) = get(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Some(v) = get(ENV_MODEL) {
            self.model = v;
        }
        if let Some(v) = get(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        if let Some(v) = get(ENV_TIMEOUT_S) {
            self.timeout_s = v
                .parse()
                .map_err(|_| BackendError::Config(format!("{ENV_TIMEOUT_S}={v} is not a number")))?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(BackendError::Config("timeout_s must be positive".into()));
        }
        host_port(&self.endpoint).map(|_| ())
    }
}

fn host_port(endpoint: &str) -> Result<(String, u16), BackendError> {
    let uri: ureq::http::Uri = endpoint
        .parse()
        .map_err(|e| BackendError::Config(format!("bad endpoint `{endpoint}`: {e}")))?;
    let host = uri
        .host()
        .ok_or_else(|| BackendError::Config(format!("endpoint `{endpoint}` has no host")))?;
    let port = uri.port_u16().unwrap_or(match uri.scheme_str() {
        Some("https") => 443,
        _ => 80,
    });
    Ok((host.trim_matches(|c| c == '[' || c == ']').to_string(), port))
}

pub struct HttpBackend {
    cfg: HttpBackendConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .build()
            .into();
        Ok(Self { cfg, agent })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.cfg
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req
            .messages()
            .into_iter()
            .map(|m| json!({ "role": m.role.as_str(), "content": m.content }))
            .collect();
        json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadResponse("no choices[0].message.content".into()))
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let body = self.request_body(req);
        let mut last = self.attempt(&body);
        for _ in 0..self.cfg.retries {
            match last {
                Err(BackendError::Unavailable(_)) => last = self.attempt(&body),
                _ => break,
            }
        }
        last
    }

    fn check_reachable(&self) -> Result<(), BackendError> {
        let (host, port) = host_port(&self.cfg.endpoint)?;
        let timeout = Duration::from_secs_f64(self.cfg.timeout_s.min(5.0));
        let addrs = (host.as_str(), port)
            .to_socket_addrs()
            .map_err(|e| BackendError::Unavailable(format!("{host}:{port}: {e}")))?;
        let mut err = format!("{host}:{port}: no addresses");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(_) => return Ok(()),
                Err(e) => err = format!("{a}: {e}"),
            }
        }
        Err(BackendError::Unavailable(err))
    }
}
