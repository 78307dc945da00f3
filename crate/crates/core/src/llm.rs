//! Language-model backends: a chat-completion HTTP client and scripted mocks.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
    fn identity(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Header carrying the key; `Authorization` sends `Bearer <key>`.
    pub api_key_header: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl ChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            api_key_header: "Authorization".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            temperature: 0.7,
        }
    }
}

pub(crate) fn http_client(timeout_secs: f64) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(timeout_secs))
        .build()
        .map_err(|e| Error::Config(format!("http client: {e}")))
}

/// Posts `body` with bounded retries on transport errors, 429 and 5xx.
pub(crate) fn post_json_with_retries(
    client: &reqwest::blocking::Client,
    url: &str,
    key: Option<(&str, &str)>,
    body: &Value,
    max_retries: u32,
) -> Result<Value> {
    let mut last = String::new();
    for attempt in 0..=max_retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(100 * (1 << attempt.min(6))));
        }
        let mut req = client.post(url).json(body);
        if let Some((header, value)) = key {
            req = req.header(header, value);
        }
        match req.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return resp.json::<Value>().map_err(|e| Error::BackendUnavailable(format!("bad response body: {e}")));
                }
                last = format!("{url} returned {status}");
                if !(status.is_server_error() || status.as_u16() == 429) {
                    break;
                }
            }
            Err(e) => last = format!("{url}: {e}"),
        }
    }
    Err(Error::BackendUnavailable(last))
}

#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    config: ChatConfig,
    client: reqwest::blocking::Client,
    identity: String,
}

impl HttpChatBackend {
    pub fn new(config: ChatConfig) -> Result<Self> {
        let client = http_client(config.timeout_secs)?;
        let identity = format!("chat:{}", config.model);
        Ok(Self { config, client, identity })
    }
}

impl LlmBackend for HttpChatBackend {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let auth;
        let key = match &self.config.api_key {
            Some(k) if self.config.api_key_header.eq_ignore_ascii_case("authorization") => {
                auth = format!("Bearer {k}");
                Some((self.config.api_key_header.as_str(), auth.as_str()))
            }
            Some(k) => Some((self.config.api_key_header.as_str(), k.as_str())),
            None => None,
        };
        let v = post_json_with_retries(&self.client, &self.config.endpoint, key, &body, self.config.max_retries)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::BackendUnavailable("response has no choices[0].message.content".into()))
    }

    fn identity(&self) -> &str {
        &self.identity
    }
}

/// Replays canned responses in order, repeating the last one once the queue
/// runs dry, and records every prompt it receives.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    responses: Mutex<VecDeque<Result<String, String>>>,
    last: Mutex<Option<Result<String, String>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(name: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(name, responses.into_iter().map(|s| Ok(s.into())))
    }

    /// `Err` entries simulate transport failures.
    pub fn with_results(name: impl Into<String>, responses: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self {
            name: name.into(),
            responses: Mutex::new(responses.into_iter().collect()),
            last: Mutex::new(None),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).push(prompt.to_string());
        let next = self.responses.lock().unwrap_or_else(|e| e.into_inner()).pop_front();
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let reply = match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().unwrap_or_else(|| Err("scripted backend has no responses".into())),
        };
        reply.map_err(Error::BackendUnavailable)
    }

    fn identity(&self) -> &str {
        &self.name
    }
}

/// Backend driven by a closure over the prompt.
pub struct FnBackend<F> {
    name: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> LlmBackend for FnBackend<F>
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String> {
        (self.f)(prompt)
    }

    fn identity(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_repeats_last_and_records() {
        let b = ScriptedBackend::new("s", ["a", "b"]);
        assert_eq!(b.complete("p1").unwrap(), "a");
        assert_eq!(b.complete("p2").unwrap(), "b");
        assert_eq!(b.complete("p3").unwrap(), "b");
        assert_eq!(b.prompts(), ["p1", "p2", "p3"]);
    }

    #[test]
    fn scripted_errors_surface_as_unavailable() {
        let b = ScriptedBackend::with_results("s", [Err("down".to_string())]);
        assert!(matches!(b.complete("x"), Err(Error::BackendUnavailable(_))));
    }
}
