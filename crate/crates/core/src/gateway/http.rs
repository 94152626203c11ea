use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, EndpointConfig, GatewayError, Transport, TransportError};

/// Blocking client for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpTransport {
    /// Reads the API key from `cfg.api_key_env` if one is configured.
    pub fn new(cfg: &EndpointConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Some(v),
                _ => return Err(GatewayError::MissingApiKey(var.clone())),
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpTransport { client, url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')), api_key })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut builder = self.client.post(&self.url).timeout(request.timeout).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(map_reqwest)?;
        let status = response.status();
        let text = response.text().map_err(map_reqwest)?;
        if !status.is_success() {
            return Err(TransportError::Status { status: status.as_u16(), body: text.chars().take(500).collect() });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| TransportError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Protocol("response has no message content".into()))
    }
}

fn map_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else if e.is_decode() || e.is_body() {
        TransportError::Protocol(e.to_string())
    } else {
        TransportError::Io(e.to_string())
    }
}
