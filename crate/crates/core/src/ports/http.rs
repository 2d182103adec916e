use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use super::chat::{finish_or_refuse, ChatModel, ChatRequest, ChatResponse, Usage};
use super::PortError;

pub const ENV_API_KEY: &str = "ESAP_API_KEY";
pub const ENV_BASE_URL: &str = "ESAP_BASE_URL";
pub const ENV_MODEL: &str = "ESAP_MODEL";

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff: Duration,
}

impl HttpSettings {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Read `ESAP_BASE_URL`, `ESAP_MODEL` and `ESAP_API_KEY` (or the given
    /// variable names).
    pub fn from_env_names(key_var: &str, url_var: &str, model_var: &str) -> Result<Self, PortError> {
        let base_url = std::env::var(url_var)
            .map_err(|_| PortError::Config(format!("{url_var} is not set")))?;
        let model = std::env::var(model_var)
            .map_err(|_| PortError::Config(format!("{model_var} is not set")))?;
        let mut s = Self::new(base_url, model);
        s.api_key = std::env::var(key_var).ok().filter(|k| !k.is_empty());
        Ok(s)
    }

    pub fn from_env() -> Result<Self, PortError> {
        Self::from_env_names(ENV_API_KEY, ENV_BASE_URL, ENV_MODEL)
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    /// POST with bounded retries and exponential backoff. Only transport
    /// failures, 429 and 5xx are retried; the last error is returned as is.
    pub fn post_json<B: Serialize>(&self, path: &str, body: &B) -> Result<Value, PortError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let url = self.url(path);
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            let mut req = agent.post(&url).set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let err = match req.send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<Value>()
                        .map_err(|e| PortError::Transport(format!("invalid JSON response: {e}")))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    let retryable = code == 429 || code >= 500;
                    let err = PortError::Transport(format!("HTTP {code}: {text}"));
                    if !retryable {
                        return Err(err);
                    }
                    err
                }
                Err(ureq::Error::Transport(t)) => PortError::Transport(t.to_string()),
            };
            if attempt >= self.max_retries {
                return Err(err);
            }
            attempt += 1;
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
}

/// Chat-completion adapter: `messages/temperature/max_tokens` in,
/// `choices[0].message.content` out.
pub struct HttpChatModel {
    settings: HttpSettings,
}

impl HttpChatModel {
    pub fn new(settings: HttpSettings) -> Self {
        Self { settings }
    }
}

impl ChatModel for HttpChatModel {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, PortError> {
        let model = if request.model.is_empty() {
            &self.settings.model
        } else {
            &request.model
        };
        let body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.settings.post_json("chat/completions", &body)?;
        let choice = &value["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| PortError::Transport("response missing choices[0].message.content".into()))?
            .to_string();
        let reason = match choice["finish_reason"].as_str() {
            None | Some("stop") | Some("complete") => "complete".to_string(),
            Some(other) => other.to_string(),
        };
        let usage = Usage {
            prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        finish_or_refuse(ChatResponse {
            text,
            finish_reason: reason,
            usage,
        })
    }
}
