//! HTTP chat-completion backend.
//!
//! Speaks the common `/chat/completions` protocol: the request carries
//! `model`, `messages`, `temperature`, and `max_tokens`; the reply text is
//! read from `choices[0].message.content`.

use crate::error::{Error, Result};
use crate::llm::{LlmProvider, LlmProviderConfig, LlmRequest};
use serde_json::{json, Value};
use ureq::Agent;

pub struct HttpLlm {
    config: LlmProviderConfig,
    agent: Agent,
}

impl HttpLlm {
    pub fn new(config: LlmProviderConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        HttpLlm { config, agent }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, request: &LlmRequest) -> Result<String> {
        let payload = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut call = self.agent.post(self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&payload)
            .map_err(|e| Error::Transport(format!("chat completion request failed: {e}")))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("chat completion reply unreadable: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                Error::ProviderContract("reply missing choices[0].message.content".into())
            })
    }
}
