//! Chat-completion providers with bounded retries, a per-provider limiter,
//! and record/replay through a content-addressed store.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config_space::Component;
use crate::http::{post_with_retry, RetryPolicy, Transport};
use crate::prompting::CompiledPrompt;
use crate::store::{KeyedStore, StoreError};
use crate::translation::sha256_hex;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("model transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("replay miss: no recorded completion for key {0}")]
    ReplayMiss(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub temperature: f64,
    pub max_output_units: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            temperature: 0.0,
            max_output_units: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RemoteHttp,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub attempts: u32,
}

pub trait ChatModel: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &ModelParams;
    fn generate(&self, prompt: &CompiledPrompt) -> Result<Generation, GatewayError>;
}

/// Request/response shape of a remote endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemoteApi {
    /// `POST {base}/chat/completions` with a messages list.
    OpenAiCompatible,
    /// `POST {base}/models/{model}:generateContent`.
    Gemini,
}

pub struct RemoteModel {
    pub model: String,
    pub api: RemoteApi,
    pub base_url: String,
    /// Environment variable holding the credential, e.g. `SELPROMPT_OPENAI_KEY`.
    pub key_env: Option<String>,
    pub params: ModelParams,
    pub retry: RetryPolicy,
    pub transport: Arc<dyn Transport>,
}

impl RemoteModel {
    fn request(&self, prompt: &str) -> Result<(String, Vec<(String, String)>, Value), GatewayError> {
        let key = match &self.key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?),
            None => None,
        };
        let base = self.base_url.trim_end_matches('/');
        Ok(match self.api {
            RemoteApi::OpenAiCompatible => {
                let headers = key
                    .map(|k| vec![("Authorization".to_string(), format!("Bearer {k}"))])
                    .unwrap_or_default();
                let body = json!({
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": self.params.temperature,
                    "max_tokens": self.params.max_output_units,
                });
                (format!("{base}/chat/completions"), headers, body)
            }
            RemoteApi::Gemini => {
                let headers = key
                    .map(|k| vec![("x-goog-api-key".to_string(), k)])
                    .unwrap_or_default();
                let body = json!({
                    "contents": [{"role": "user", "parts": [{"text": prompt}]}],
                    "generationConfig": {
                        "temperature": self.params.temperature,
                        "maxOutputTokens": self.params.max_output_units,
                    },
                });
                (format!("{base}/models/{}:generateContent", self.model), headers, body)
            }
        })
    }

    fn extract(&self, body: &str) -> Result<String, GatewayError> {
        let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        let text = match self.api {
            RemoteApi::OpenAiCompatible => v.pointer("/choices/0/message/content"),
            RemoteApi::Gemini => v.pointer("/candidates/0/content/parts/0/text"),
        };
        text.and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse(format!("no completion text in {}", truncate(body))))
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl ChatModel for RemoteModel {
    fn name(&self) -> &str {
        &self.model
    }

    fn kind(&self) -> ModelKind {
        ModelKind::RemoteHttp
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn generate(&self, prompt: &CompiledPrompt) -> Result<Generation, GatewayError> {
        let (url, headers, body) = self.request(&prompt.text)?;
        let (resp, attempts) = post_with_retry(self.transport.as_ref(), &self.retry, &url, &headers, &body).map_err(|f| {
            GatewayError::Transport {
                attempts: f.attempts,
                message: f.last_error,
            }
        })?;
        Ok(Generation {
            text: self.extract(&resp)?,
            attempts,
        })
    }
}

/// Serves completions recorded under a provider name and parameters.
pub struct ReplayModel {
    name: String,
    params: ModelParams,
}

impl ReplayModel {
    pub fn new(recorded_name: &str, params: ModelParams) -> Self {
        ReplayModel {
            name: recorded_name.to_string(),
            params,
        }
    }
}

impl ChatModel for ReplayModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Replay
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn generate(&self, prompt: &CompiledPrompt) -> Result<Generation, GatewayError> {
        Err(GatewayError::ReplayMiss(completion_key(&self.name, &self.params, &prompt.text)))
    }
}

pub type ScriptFn = dyn Fn(&CompiledPrompt) -> String + Send + Sync;

/// Deterministic in-process model for tests and offline runs.
pub struct ScriptedModel {
    name: String,
    params: ModelParams,
    script: Arc<ScriptFn>,
}

impl ScriptedModel {
    pub fn new(name: &str, script: Arc<ScriptFn>) -> Self {
        ScriptedModel {
            name: name.to_string(),
            params: ModelParams::default(),
            script,
        }
    }

    /// Answers with the prompt's context block verbatim.
    pub fn echo() -> Self {
        Self::new(
            "scripted-echo",
            Arc::new(|p: &CompiledPrompt| p.span(Component::Context).unwrap_or_default().to_string()),
        )
    }

    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        Self::new("scripted-constant", Arc::new(move |_: &CompiledPrompt| text.clone()))
    }
}

impl ChatModel for ScriptedModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Scripted
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn generate(&self, prompt: &CompiledPrompt) -> Result<Generation, GatewayError> {
        Ok(Generation {
            text: (self.script)(prompt),
            attempts: 1,
        })
    }
}

/// Record key: sha256 over provider name, parameters and prompt text.
pub fn completion_key(provider: &str, params: &ModelParams, prompt: &str) -> String {
    let params = serde_json::to_string(params).expect("params serialize");
    sha256_hex(format!("{provider}\u{1f}{params}\u{1f}{prompt}").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub key: String,
    pub provider: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// Caps in-flight requests and enforces a minimum spacing between request starts.
pub struct Limiter {
    max_in_flight: usize,
    min_interval: Duration,
    in_flight: Mutex<usize>,
    freed: Condvar,
    last_start: Mutex<Option<Instant>>,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap();
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

impl Limiter {
    pub fn new(max_in_flight: usize, min_interval: Duration) -> Self {
        Limiter {
            max_in_flight: max_in_flight.max(1),
            min_interval,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            last_start: Mutex::new(None),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(usize::MAX, Duration::ZERO)
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        drop(n);
        if !self.min_interval.is_zero() {
            let mut last = self.last_start.lock().unwrap();
            if let Some(prev) = *last {
                let next = prev + self.min_interval;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                }
            }
            *last = Some(Instant::now());
        }
        Permit { limiter: self }
    }
}

/// A model behind a limiter and a record store.
pub struct Gateway {
    model: Arc<dyn ChatModel>,
    store: Arc<dyn KeyedStore>,
    limiter: Arc<Limiter>,
}

impl Gateway {
    pub fn new(model: Arc<dyn ChatModel>, store: Arc<dyn KeyedStore>, limiter: Arc<Limiter>) -> Self {
        Gateway { model, store, limiter }
    }

    pub fn model(&self) -> &dyn ChatModel {
        self.model.as_ref()
    }

    pub fn is_store_empty(&self) -> Result<bool, StoreError> {
        self.store.is_empty()
    }

    /// Returns the recorded completion when the store has one; otherwise calls
    /// the model (replay models fail here) and records before returning.
    pub fn complete(&self, prompt: &CompiledPrompt) -> Result<CompletionRecord, GatewayError> {
        let key = completion_key(self.model.name(), self.model.params(), &prompt.text);
        if let Some(v) = self.store.get(&key)? {
            return serde_json::from_value(v).map_err(|e| GatewayError::BadResponse(format!("stored record {key}: {e}")));
        }
        let started = Instant::now();
        let generation = {
            let _permit = self.limiter.acquire();
            self.model.generate(prompt)?
        };
        let record = CompletionRecord {
            key: key.clone(),
            provider: self.model.name().to_string(),
            response_text: generation.text,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: generation.attempts,
        };
        let stored = self.store.put_if_absent(&key, serde_json::to_value(&record).expect("record serializes"))?;
        serde_json::from_value(stored).map_err(|e| GatewayError::BadResponse(format!("stored record {key}: {e}")))
    }
}
