use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::prompt::{build_cot_prompt, TEMPLATE_VERSION};
use super::schema::validate_schema;
use super::{Engine, FailureKind, ParseFailure, ParseResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Anything that can answer a chat transcript with one reply.
pub trait ChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Default)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct LlmClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_inflight: usize,
    gate: Arc<Gate>,
}

impl LlmClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_inflight: 4,
            gate: Arc::default(),
        }
    }

    /// `SDM_LLM_ENDPOINT` (required), `SDM_LLM_MODEL`, `SDM_LLM_API_KEY`,
    /// `SDM_LLM_TIMEOUT_SECS`, `SDM_LLM_MAX_INFLIGHT`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("SDM_LLM_ENDPOINT")
            .ok()
            .filter(|s| !s.trim().is_empty())?;
        let mut c = Self::new(
            endpoint,
            std::env::var("SDM_LLM_MODEL").unwrap_or_else(|_| "llama3".into()),
        );
        c.api_key = std::env::var("SDM_LLM_API_KEY").ok().filter(|s| !s.is_empty());
        if let Some(secs) = std::env::var("SDM_LLM_TIMEOUT_SECS").ok().and_then(|s| s.parse().ok()) {
            c.timeout = Duration::from_secs(secs);
        }
        if let Some(n) = std::env::var("SDM_LLM_MAX_INFLIGHT").ok().and_then(|s| s.parse().ok()) {
            c.max_inflight = n;
        }
        Some(c)
    }

    fn acquire(&self) -> InflightPermit<'_> {
        let mut n = self.gate.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max_inflight.max(1) {
            n = self.gate.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InflightPermit(&self.gate)
    }
}

struct InflightPermit<'a>(&'a Gate);

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl ChatBackend for LlmClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let _permit = self.acquire();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({"model": self.model, "messages": messages, "temperature": 0});
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("unreadable completion response: {e}")))?;
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "completion service returned {status}: {value}"
            )));
        }
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Transport("response lacks choices[0].message.content".into()))
    }
}

/// First balanced `{...}` in `text`, skipping braces inside JSON strings.
pub fn extract_first_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(rel) = text[search..].find('{') {
        let start = search + rel;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=i];
                        if serde_json::from_str::<Value>(candidate).is_ok() {
                            return Some(candidate);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        search = start + 1;
    }
    None
}

const SYSTEM: &str = "You are a careful CAD assistant. Follow the steps and finish with exactly one JSON object.";

fn check(reply: &str) -> std::result::Result<super::StructuredCommand, Vec<String>> {
    let Some(obj) = extract_first_json_object(reply) else {
        return Err(vec!["reply contains no JSON object".into()]);
    };
    let value: Value = serde_json::from_str(obj).map_err(|e| vec![format!("invalid JSON: {e}")])?;
    validate_schema(&value)
}

/// Sends the prompt, validates the reply and retries once with a repair
/// instruction listing the violations.
pub fn parse_with_backend(text: &str, backend: &dyn ChatBackend) -> ParseResult {
    let transport = |e: Error, raw: Vec<String>| {
        ParseResult::failed(
            Engine::Llm,
            ParseFailure {
                kind: FailureKind::Transport,
                reason: e.to_string(),
                clause: None,
                offset: None,
                violations: Vec::new(),
            },
            raw,
        )
    };
    let prompt = match build_cot_prompt(text, TEMPLATE_VERSION) {
        Ok(p) => p,
        Err(e) => {
            return ParseResult::failed(
                Engine::Llm,
                ParseFailure {
                    kind: FailureKind::Unparseable,
                    reason: e.to_string(),
                    clause: None,
                    offset: None,
                    violations: Vec::new(),
                },
                Vec::new(),
            )
        }
    };
    let mut messages = vec![ChatMessage::new("system", SYSTEM), ChatMessage::new("user", prompt)];
    let mut raw = Vec::new();
    let mut violations = Vec::new();
    for attempt in 0..2 {
        if attempt == 1 {
            messages.push(ChatMessage::new("assistant", raw.last().cloned().unwrap_or_default()));
            messages.push(ChatMessage::new(
                "user",
                format!(
                    "Your answer did not satisfy the output schema:\n- {}\nReply with only the corrected JSON object.",
                    violations.join("\n- ")
                ),
            ));
        }
        let reply = match backend.complete(&messages) {
            Ok(r) => r,
            Err(e) => return transport(e, raw),
        };
        let outcome = check(&reply);
        raw.push(reply);
        match outcome {
            Ok(c) => return ParseResult::success(Engine::Llm, c, raw),
            Err(v) => violations = v,
        }
    }
    ParseResult::failed(
        Engine::Llm,
        ParseFailure {
            kind: FailureKind::SchemaInvalid,
            reason: "model output failed schema validation after one repair attempt".into(),
            clause: None,
            offset: None,
            violations,
        },
        raw,
    )
}

pub fn parse_with_llm(text: &str, client: &LlmClient) -> ParseResult {
    parse_with_backend(text, client)
}
