//! Machine translation of prompt components and model outputs, behind a
//! persistent cache.
//!
//! Three provider kinds: a remote HTTP adapter, a deterministic mock that
//! tags text as `⟦src→tgt⟧text`, and replay, which serves only what a cache
//! already holds.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{post_with_retry, RetryPolicy, Transport};
use crate::store::{KeyedStore, MemoryStore, StoreError};

#[derive(Debug, Error)]
pub enum TranslationError {
    #[error("translation transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("replay miss: no cached translation for {source_lang}->{target_lang} text {text_hash}")]
    ReplayMiss {
        source_lang: String,
        target_lang: String,
        text_hash: String,
    },
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

impl TranslationRequest {
    pub fn new(text: impl Into<String>, source_lang: &str, target_lang: &str) -> Self {
        TranslationRequest {
            text: text.into(),
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.source_lang == self.target_lang
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteHttp,
    Mock,
    Replay,
}

pub trait Translator: Send + Sync {
    /// Cache namespace. Replay providers report the name of the provider whose
    /// translations they replay.
    fn name(&self) -> &str;
    fn kind(&self) -> ProviderKind;
    /// Performs one uncached translation.
    fn translate_uncached(&self, req: &TranslationRequest) -> Result<String, TranslationError>;
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Deterministic offline translator. `⟦a→b⟧t` translated back b→a yields `t`.
#[derive(Debug, Default)]
pub struct MockTranslator {
    calls: AtomicUsize,
}

impl MockTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn tag(source: &str, target: &str) -> String {
        format!("⟦{source}→{target}⟧")
    }

    pub fn apply(req: &TranslationRequest) -> String {
        let inverse = Self::tag(&req.target_lang, &req.source_lang);
        match req.text.strip_prefix(&inverse) {
            Some(original) => original.to_string(),
            None => format!("{}{}", Self::tag(&req.source_lang, &req.target_lang), req.text),
        }
    }
}

impl Translator for MockTranslator {
    fn name(&self) -> &str {
        "mock"
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Mock
    }

    fn translate_uncached(&self, req: &TranslationRequest) -> Result<String, TranslationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Self::apply(req))
    }
}

/// Serves translations recorded under `name` in the cache; every cache miss
/// is an error.
#[derive(Debug, Clone)]
pub struct ReplayTranslator {
    name: String,
}

impl ReplayTranslator {
    pub fn new(recorded_provider: &str) -> Self {
        ReplayTranslator {
            name: recorded_provider.to_string(),
        }
    }
}

impl Translator for ReplayTranslator {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Replay
    }

    fn translate_uncached(&self, req: &TranslationRequest) -> Result<String, TranslationError> {
        Err(TranslationError::ReplayMiss {
            source_lang: req.source_lang.clone(),
            target_lang: req.target_lang.clone(),
            text_hash: sha256_hex(req.text.as_bytes()),
        })
    }
}

/// Maps registry codes that are not ISO 639-1 to the codes MT services expect.
pub fn provider_lang_code(code: &str) -> &str {
    match code {
        "po" => "pt",
        "bam" => "bm",
        "hau" => "ha",
        "yor" => "yo",
        other => other,
    }
}

/// Generic JSON translation endpoint: POST `{text, source, target}` and read
/// the translation from `translation`, `translatedText` or `text`.
pub struct HttpTranslator {
    name: String,
    url: String,
    api_key_env: Option<String>,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl HttpTranslator {
    pub fn new(name: &str, url: &str, api_key_env: Option<&str>, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        HttpTranslator {
            name: name.to_string(),
            url: url.to_string(),
            api_key_env: api_key_env.map(str::to_string),
            transport,
            retry,
        }
    }
}

impl Translator for HttpTranslator {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteHttp
    }

    fn translate_uncached(&self, req: &TranslationRequest) -> Result<String, TranslationError> {
        let mut headers = Vec::new();
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var).map_err(|_| TranslationError::MissingCredential(var.clone()))?;
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let body = json!({
            "text": req.text,
            "source": provider_lang_code(&req.source_lang),
            "target": provider_lang_code(&req.target_lang),
        });
        let (text, _) = post_with_retry(self.transport.as_ref(), &self.retry, &self.url, &headers, &body).map_err(|f| {
            TranslationError::Transport {
                attempts: f.attempts,
                message: f.last_error,
            }
        })?;
        let v: Value = serde_json::from_str(&text).map_err(|e| TranslationError::BadResponse(e.to_string()))?;
        ["translation", "translatedText", "text"]
            .iter()
            .find_map(|k| v.get(*k).and_then(Value::as_str))
            .map(str::to_string)
            .ok_or_else(|| TranslationError::BadResponse(format!("no translation field in {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub provider: String,
    pub source_lang: String,
    pub target_lang: String,
    pub text_hash: String,
    pub translation: String,
    pub timestamp: u64,
}

/// Append-only translation cache over any keyed store.
#[derive(Clone)]
pub struct TranslationCache {
    store: Arc<dyn KeyedStore>,
}

impl Default for TranslationCache {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TranslationCache {
    pub fn new(store: Arc<dyn KeyedStore>) -> Self {
        TranslationCache { store }
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryStore::new()))
    }

    pub fn key(provider: &str, req: &TranslationRequest) -> String {
        let text_hash = sha256_hex(req.text.as_bytes());
        sha256_hex(format!("{provider}\u{1f}{}\u{1f}{}\u{1f}{text_hash}", req.source_lang, req.target_lang).as_bytes())
    }

    pub fn lookup(&self, provider: &str, req: &TranslationRequest) -> Result<Option<String>, TranslationError> {
        let value = self.store.get(&Self::key(provider, req))?;
        Ok(value.and_then(|v| v.get("translation").and_then(Value::as_str).map(str::to_string)))
    }

    /// Records a translation; returns whichever value the store holds afterwards.
    pub fn insert(&self, provider: &str, req: &TranslationRequest, translation: &str) -> Result<String, TranslationError> {
        let record = CacheRecord {
            provider: provider.to_string(),
            source_lang: req.source_lang.clone(),
            target_lang: req.target_lang.clone(),
            text_hash: sha256_hex(req.text.as_bytes()),
            translation: translation.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let stored = self
            .store
            .put_if_absent(&Self::key(provider, req), serde_json::to_value(record).expect("record serializes"))?;
        Ok(stored
            .get("translation")
            .and_then(Value::as_str)
            .unwrap_or(translation)
            .to_string())
    }

    pub fn len(&self) -> Result<usize, TranslationError> {
        Ok(self.store.len()?)
    }

    pub fn is_empty(&self) -> Result<bool, TranslationError> {
        Ok(self.len()? == 0)
    }
}

/// Translates through the cache. Identity requests return the input without
/// touching cache or provider.
pub fn translate(req: &TranslationRequest, provider: &dyn Translator, cache: &TranslationCache) -> Result<String, TranslationError> {
    if req.is_identity() {
        return Ok(req.text.clone());
    }
    if let Some(hit) = cache.lookup(provider.name(), req)? {
        return Ok(hit);
    }
    let fresh = provider.translate_uncached(req)?;
    cache.insert(provider.name(), req, &fresh)
}

/// Translates a model output into the gold language for scoring.
pub fn back_translate(
    output: &str,
    from_lang: &str,
    to_lang: &str,
    provider: &dyn Translator,
    cache: &TranslationCache,
) -> Result<String, TranslationError> {
    translate(&TranslationRequest::new(output, from_lang, to_lang), provider, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::HttpResponse;

    #[test]
    fn identity_short_circuits() {
        let mock = MockTranslator::new();
        let cache = TranslationCache::in_memory();
        let out = translate(&TranslationRequest::new("Hallo", "de", "de"), &mock, &cache).unwrap();
        assert_eq!(out, "Hallo");
        assert_eq!(mock.calls(), 0);
        assert!(cache.is_empty().unwrap());
    }

    #[test]
    fn mock_tags_and_reverses() {
        let mock = MockTranslator::new();
        let cache = TranslationCache::in_memory();
        let fr = translate(&TranslationRequest::new("Bonjour", "fr", "en"), &mock, &cache).unwrap();
        assert_eq!(fr, "⟦fr→en⟧Bonjour");
        let de = translate(&TranslationRequest::new("X", "en", "de"), &mock, &cache).unwrap();
        assert_eq!(back_translate(&de, "de", "en", &mock, &cache).unwrap(), "X");
    }

    #[test]
    fn cache_hit_skips_provider() {
        let mock = MockTranslator::new();
        let cache = TranslationCache::in_memory();
        let req = TranslationRequest::new("text", "en", "sw");
        let a = translate(&req, &mock, &cache).unwrap();
        let b = translate(&req, &mock, &cache).unwrap();
        assert_eq!(a, b);
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn replay_reads_cache_and_misses_loudly() {
        let cache = TranslationCache::in_memory();
        let req = TranslationRequest::new("hello", "en", "de");
        cache.insert("gt", &req, "hallo").unwrap();
        let replay = ReplayTranslator::new("gt");
        assert_eq!(translate(&req, &replay, &cache).unwrap(), "hallo");
        let miss = TranslationRequest::new("other", "en", "de");
        assert!(matches!(translate(&miss, &replay, &cache), Err(TranslationError::ReplayMiss { .. })));
    }

    struct Echo;

    impl Transport for Echo {
        fn post_json(&self, _: &str, _: &[(String, String)], body: &Value) -> Result<HttpResponse, String> {
            Ok(HttpResponse {
                status: 200,
                body: json!({"translatedText": format!("{}:{}", body["target"].as_str().unwrap(), body["text"].as_str().unwrap())}).to_string(),
                retry_after: None,
            })
        }
    }

    #[test]
    fn http_adapter_maps_codes_and_parses() {
        let t = HttpTranslator::new("svc", "http://stub", None, Arc::new(Echo), RetryPolicy::no_delay(1));
        let out = t.translate_uncached(&TranslationRequest::new("hi", "en", "po")).unwrap();
        assert_eq!(out, "pt:hi");
    }
}
