//! Chat-completions backend.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use revqa_core::agents::{Backend, BackendError, BackendRequest};
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_ENV: &str = "REAGENT_API_KEY";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HttpError {
    #[error("environment variable {API_KEY_ENV} is not set")]
    MissingKey,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    key: String,
    calls: AtomicU64,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, key: &str, timeout_secs: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            key: key.to_string(),
            calls: AtomicU64::new(0),
        }
    }

    /// Reads the key from `REAGENT_API_KEY`.
    pub fn from_env(base_url: &str, model: &str, timeout_secs: u64) -> Result<Self, HttpError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(HttpError::MissingKey)?;
        Ok(Self::new(base_url, model, &key, timeout_secs))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn request_body(&self, req: &BackendRequest<'_>) -> Value {
        json!({
            "model": self.model,
            "temperature": req.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        })
    }
}

/// `choices[0].message.content` of a completion response.
pub fn completion_text(body: &Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Failure("response has no choices[0].message.content".into()))
}

impl Backend for HttpBackend {
    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let fail = |e: &dyn std::fmt::Display| BackendError::Failure(format!("{}: {e}", self.url));
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(self.request_body(req))
            .map_err(|e| fail(&e))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| fail(&e))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            return Err(fail(&format!("HTTP {status}: {snippet}")));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| fail(&e))?;
        completion_text(&body)
    }
}
