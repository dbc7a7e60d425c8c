use std::time::Duration;

use serde_json::{json, Value};

use super::client::{CompletionRequest, LanguageModelClient};
use crate::{Error, Result};

/// Client for an OpenAI-compatible `chat/completions` endpoint.
pub struct HttpClient {
    url: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        Ok(HttpClient {
            url: url.to_string(),
            model: model.to_string(),
            api_key,
            http,
        })
    }
}

impl LanguageModelClient for HttpClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Client(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Client(format!("{} returned {status}", self.url)));
        }
        let value: Value = resp.json().map_err(|e| Error::Client(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .or_else(|| value["choices"][0]["text"].as_str())
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Client("response has no completion text".into()))
    }
}
