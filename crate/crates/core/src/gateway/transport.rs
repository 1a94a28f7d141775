//! Transports: live HTTPS chat-completions, record (live + persist), replay
//! (fixtures only), plus in-process scripted transports for authoring
//! fixtures and tests.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::fixture::{Fixture, FixtureMetadata, FixtureStore};
use super::message::ChatRequest;
use super::GatewayError;

pub const API_KEY_ENV: &str = "DEMO2PLAN_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Live,
    Record,
    Replay,
    Scripted,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::Live => "live",
            TransportMode::Record => "record",
            TransportMode::Replay => "replay",
            TransportMode::Scripted => "scripted",
        })
    }
}

impl FromStr for TransportMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "live" => Ok(TransportMode::Live),
            "record" => Ok(TransportMode::Record),
            "replay" => Ok(TransportMode::Replay),
            "scripted" => Ok(TransportMode::Scripted),
            other => Err(GatewayError::InvalidArgument(format!("unknown transport `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub request_hash: String,
    pub model_id: String,
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError>;
    fn mode(&self) -> TransportMode;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        (**self).complete(request)
    }
    fn mode(&self) -> TransportMode {
        (**self).mode()
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        (**self).complete(request)
    }
    fn mode(&self) -> TransportMode {
        (**self).mode()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

/// HTTPS chat-completions client.
pub struct LiveTransport {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for LiveTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveTransport")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl LiveTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Http(e.to_string()))?;
        Ok(LiveTransport {
            endpoint: endpoint.into(),
            api_key,
            retry: RetryPolicy::default(),
            client,
        })
    }

    /// Reads the API key from `DEMO2PLAN_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, GatewayError> {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, body: &Value) -> Result<String, AttemptError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| AttemptError::Retryable(GatewayError::Http(e.to_string())))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| AttemptError::Retryable(GatewayError::Http(e.to_string())))?;
        if !(200..300).contains(&status) {
            let err = GatewayError::EndpointError { status, body: text };
            return if status == 429 || status >= 500 {
                Err(AttemptError::Retryable(err))
            } else {
                Err(AttemptError::Fatal(err))
            };
        }
        extract_content(&text).map_err(AttemptError::Fatal)
    }
}

enum AttemptError {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
pub fn extract_content(body: &str) -> Result<String, GatewayError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::Http(format!("response is not JSON: {e}")))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(GatewayError::Http("response has no message content".into())),
    }
}

impl Transport for LiveTransport {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = request.wire_body();
        let mut backoff = self.retry.initial_backoff;
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        request_hash: request.request_hash(),
                        model_id: request.model.clone(),
                    })
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(e)) => {
                    log::warn!("chat request attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(last.unwrap_or_else(|| GatewayError::Http("no attempt made".into())))
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Live
    }
}

/// Forwards to an inner transport and persists every response as a fixture.
pub struct RecordingTransport<T> {
    inner: T,
    store: FixtureStore,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, store: FixtureStore) -> Self {
        RecordingTransport { inner, store }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let completion = self.inner.complete(request)?;
        self.store.put(&Fixture {
            request_hash: completion.request_hash.clone(),
            response_text: completion.text.clone(),
            metadata: FixtureMetadata {
                recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                model_id: completion.model_id.clone(),
            },
        })?;
        Ok(completion)
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Record
    }
}

/// Answers only from recorded fixtures.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    store: FixtureStore,
}

impl ReplayTransport {
    pub fn new(store: FixtureStore) -> Self {
        ReplayTransport { store }
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let hash = request.request_hash();
        match self.store.get(&hash)? {
            Some(fixture) => Ok(Completion {
                text: fixture.response_text,
                request_hash: hash,
                model_id: fixture.metadata.model_id,
            }),
            None => Err(GatewayError::FixtureMiss { request_hash: hash }),
        }
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Replay
    }
}

/// Returns queued responses in order, regardless of the request.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedTransport {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedTransport {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("scripted transport lock").len()
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let text = self
            .responses
            .lock()
            .expect("scripted transport lock")
            .pop_front()
            .ok_or(GatewayError::ScriptExhausted)?;
        Ok(Completion {
            text,
            request_hash: request.request_hash(),
            model_id: request.model.clone(),
        })
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Scripted
    }
}

/// Computes each response from the request with a closure.
pub struct FnTransport<F> {
    respond: F,
}

impl<F> FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        FnTransport { respond }
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        Ok(Completion {
            text: (self.respond)(request)?,
            request_hash: request.request_hash(),
            model_id: request.model.clone(),
        })
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Scripted
    }
}
