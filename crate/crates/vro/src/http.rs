//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};
use vro_core::progen::{ChatEndpoint, Message, TransportError};

#[derive(Debug, Clone)]
pub struct HttpChatEndpoint {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub token: Option<String>,
    pub model: String,
    pub temperature: f64,
    agent: ureq::Agent,
}

impl HttpChatEndpoint {
    pub fn new(url: impl Into<String>, token: Option<String>, model: impl Into<String>, temperature: f64, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpChatEndpoint { url: url.into(), token, model: model.into(), temperature, agent }
    }

    pub fn request_body(&self, messages: &[Message]) -> Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": messages,
        })
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn reply_text(body: &Value) -> Result<String, TransportError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| TransportError("response lacks choices[0].message.content".into()))
}

impl ChatEndpoint for HttpChatEndpoint {
    fn complete(&mut self, messages: &[Message]) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(self.request_body(messages)).map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.body_mut().read_json().map_err(|e| TransportError(format!("status {status}: {e}")))?;
        if !status.is_success() {
            return Err(TransportError(format!("status {status}: {body}")));
        }
        reply_text(&body)
    }
}
