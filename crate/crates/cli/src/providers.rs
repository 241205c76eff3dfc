use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use selprompt_core::gateway::{ChatModel, ModelParams, RemoteApi, RemoteModel, ReplayModel, ScriptedModel};
use selprompt_core::http::{ReqwestTransport, RetryPolicy};
use selprompt_core::store::{DirStore, KeyedStore, MemoryStore};
use selprompt_core::translation::{HttpTranslator, MockTranslator, ReplayTranslator, TranslationCache, Translator};

use crate::args::{ModelProvider, TranslatorArgs, TranslatorKind};

/// Credential variable for a provider: `SELPROMPT_<PROVIDER>_KEY`.
pub fn key_env(provider: &str) -> String {
    format!("SELPROMPT_{}_KEY", provider.to_ascii_uppercase())
}

pub fn translator(args: &TranslatorArgs) -> Result<(Arc<dyn Translator>, TranslationCache)> {
    let cache = match &args.cache_dir {
        Some(dir) => {
            let store = DirStore::open(&dir.join("translations")).context("opening translation cache")?;
            TranslationCache::new(Arc::new(store))
        }
        None => TranslationCache::in_memory(),
    };
    let provider: Arc<dyn Translator> = match args.translator {
        TranslatorKind::Mock => Arc::new(MockTranslator::new()),
        TranslatorKind::Replay => Arc::new(ReplayTranslator::new(&args.translator_name)),
        TranslatorKind::Http => {
            let Some(url) = &args.translator_url else {
                bail!("--translator http needs --translator-url");
            };
            Arc::new(HttpTranslator::new(
                &args.translator_name,
                url,
                Some(&key_env("translator")),
                Arc::new(ReqwestTransport::new(Duration::from_secs(60))),
                RetryPolicy::default(),
            ))
        }
    };
    Ok((provider, cache))
}

pub struct ModelSetup {
    pub model: Arc<dyn ChatModel>,
    pub store: Arc<dyn KeyedStore>,
}

pub fn model(
    provider: ModelProvider,
    name: &str,
    params: ModelParams,
    base_url: Option<&str>,
    store_dir: Option<PathBuf>,
) -> Result<ModelSetup> {
    let store: Arc<dyn KeyedStore> = match &store_dir {
        Some(dir) => Arc::new(DirStore::open(dir).context("opening completion store")?),
        None if provider == ModelProvider::Replay => bail!("--provider replay needs --replay-dir"),
        None => Arc::new(MemoryStore::new()),
    };
    let remote = |api: RemoteApi, default_url: &str, provider_key: &str| -> Arc<dyn ChatModel> {
        Arc::new(RemoteModel {
            model: name.to_string(),
            api,
            base_url: base_url.unwrap_or(default_url).to_string(),
            key_env: Some(key_env(provider_key)),
            params,
            retry: RetryPolicy::default(),
            transport: Arc::new(ReqwestTransport::new(Duration::from_secs(120))),
        })
    };
    let model: Arc<dyn ChatModel> = match provider {
        ModelProvider::Scripted => Arc::new(ScriptedModel::echo()),
        ModelProvider::Replay => Arc::new(ReplayModel::new(name, params)),
        ModelProvider::Openai => remote(RemoteApi::OpenAiCompatible, "https://api.openai.com/v1", "openai"),
        ModelProvider::Together => remote(RemoteApi::OpenAiCompatible, "https://api.together.xyz/v1", "together"),
        ModelProvider::Gemini => remote(RemoteApi::Gemini, "https://generativelanguage.googleapis.com/v1beta", "gemini"),
    };
    Ok(ModelSetup { model, store })
}
