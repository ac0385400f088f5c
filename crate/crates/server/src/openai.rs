//! Completion provider for any endpoint speaking the OpenAI chat-completions
//! wire format. Retries are left to the gateway; this only classifies
//! failures as retryable or not.

use std::time::Duration;

use expertloop::config::OpenAiConfig;
use expertloop::llm::{CompletionProvider, PromptBundle, ProviderError};
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum OpenAiSetupError {
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("building http client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug)]
pub struct OpenAiProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl OpenAiProvider {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_config(cfg: &OpenAiConfig) -> Result<Self, OpenAiSetupError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| OpenAiSetupError::MissingKey(cfg.api_key_env.clone()))?;
        Self::new(&cfg.base_url, &cfg.model, key)
    }

    pub fn new(base_url: &str, model: &str, api_key: String) -> Result<Self, OpenAiSetupError> {
        Ok(Self {
            client: reqwest::blocking::Client::builder().timeout(Duration::from_secs(60)).build()?,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_owned(),
            api_key,
        })
    }
}

impl CompletionProvider for OpenAiProvider {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_prompt},
                {"role": "user", "content": prompt.query_prompt},
            ],
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::retryable(format!("request failed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            let msg = format!("status {status}: {}", detail.chars().take(200).collect::<String>());
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                ProviderError::retryable(msg)
            } else {
                ProviderError::fatal(msg)
            });
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ProviderError::retryable(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::retryable("response has no content"))
    }
}
