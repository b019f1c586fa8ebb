//! Upstream LLM clients: echo, canned fixtures and a chat-completions HTTP adapter.
//!
//! A canned fixture is a flat JSON object mapping exact prompts to responses;
//! the optional key `"*"` is the fallback for any other prompt:
//!
//! ```json
//! {"hello": "hi there", "*": "I cannot answer that."}
//! ```
//!
//! The HTTP adapter POSTs `{"model": ..., "messages": [{"role": "user", "content": prompt}]}`
//! to `<base_url>/chat/completions` and returns `choices[0].message.content`.
//! The bearer token, if any, is read from the named environment variable on each call.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use llmguard_core::{Upstream, UpstreamError};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::DataError;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
/// Fixture key used when no entry matches the prompt exactly.
pub const CANNED_FALLBACK_KEY: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpstreamConfig {
    Echo,
    Canned { fixture: PathBuf },
    HttpChat { base_url: String, model: String, token_env: Option<String>, timeout_ms: u64 },
}

/// Builds the client described by `config`. Canned fixtures are read here, once.
pub fn build_upstream(config: &UpstreamConfig) -> Result<Arc<dyn Upstream>, DataError> {
    Ok(match config {
        UpstreamConfig::Echo => Arc::new(Echo),
        UpstreamConfig::Canned { fixture } => Arc::new(Canned::load(fixture)?),
        UpstreamConfig::HttpChat { base_url, model, token_env, timeout_ms } => {
            Arc::new(HttpChat::new(base_url, model, token_env.clone(), *timeout_ms))
        }
    })
}

/// One-shot call through a freshly built client.
pub fn upstream_call(config: &UpstreamConfig, prompt: &str) -> Result<String, UpstreamError> {
    let client = build_upstream(config).map_err(|e| UpstreamError::new(e.to_string()))?;
    client.complete(prompt)
}

/// Returns the prompt verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct Echo;

impl Upstream for Echo {
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError> {
        Ok(prompt.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Canned {
    entries: BTreeMap<String, String>,
}

impl Canned {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        Canned { entries }
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }
}

impl Upstream for Canned {
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError> {
        self.entries
            .get(prompt)
            .or_else(|| self.entries.get(CANNED_FALLBACK_KEY))
            .cloned()
            .ok_or_else(|| UpstreamError::new("canned fixture has no entry for this prompt and no \"*\" default"))
    }
}

#[derive(Debug)]
pub struct HttpChat {
    url: String,
    model: String,
    token_env: Option<String>,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(base_url: &str, model: &str, token_env: Option<String>, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChat {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            token_env,
            agent,
        }
    }
}

impl Upstream for HttpChat {
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.agent.post(&self.url);
        if let Some(token) = self.token_env.as_deref().and_then(|var| std::env::var(var).ok()) {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| UpstreamError::new(format!("POST {}: {e}", self.url)))?;
        let status = response.status();
        if !status.is_success() {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(UpstreamError::new(format!("POST {} returned {status}: {}", self.url, truncate(&detail, 200))));
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| UpstreamError::new(format!("malformed upstream body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| UpstreamError::new("malformed upstream body: no choices[0].message.content"))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_is_verbatim() {
        assert_eq!(Echo.complete(" x\ny ").unwrap(), " x\ny ");
    }

    #[test]
    fn canned_exact_then_fallback() {
        let c: Canned = serde_json::from_str(r#"{"hello":"hi","*":"default"}"#).unwrap();
        assert_eq!(c.complete("hello").unwrap(), "hi");
        assert_eq!(c.complete("Hello").unwrap(), "default");
        let strict = Canned::new(BTreeMap::from([("a".into(), "b".into())]));
        assert!(strict.complete("z").is_err());
    }

    #[test]
    fn canned_fixture_errors_name_path() {
        let Err(err) = build_upstream(&UpstreamConfig::Canned { fixture: "/missing/fixture.json".into() }) else {
            panic!("missing fixture accepted");
        };
        assert!(err.to_string().contains("/missing/fixture.json"));
    }

    #[test]
    fn unreachable_http_is_upstream_error() {
        // Port 9 on localhost is closed in the test environment.
        let cfg = UpstreamConfig::HttpChat {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            token_env: None,
            timeout_ms: 2000,
        };
        assert!(upstream_call(&cfg, "hi").is_err());
    }
}
