//! Request and response types shared by the command line and the HTTP
//! service, and the [`Service`] that answers them. Both surfaces serialize
//! responses with [`to_body`], so equal requests yield equal bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config_space::{enumerate_configurations, parse_config_code, LanguageInfo, LanguageRegistry, TaskKind};
use crate::corpus::{parse_record, NliLabel, Payload, TaskInstance};
use crate::prompting::{ComponentSpan, PromptCompiler, PromptError, PromptTemplates};
use crate::recommend::{recommend, RecommendError, RuleTable};
use crate::translation::{MockTranslator, TranslationCache, TranslationError, Translator};

/// Structured error body: `{code, message, module}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub module: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    pub fn new(status: u16, code: &str, module: &str, message: impl Into<String>) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            module: module.to_string(),
            status,
        }
    }

    pub fn invalid(code: &str, module: &str, message: impl Into<String>) -> Self {
        Self::new(422, code, module, message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} ({})", self.module, self.message, self.code)
    }
}

impl std::error::Error for ApiError {}

fn translation_error(e: &TranslationError) -> ApiError {
    match e {
        TranslationError::MissingCredential(_) => ApiError::new(503, "provider_unavailable", "translation", e.to_string()),
        _ => ApiError::new(502, "provider_error", "translation", e.to_string()),
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        match &e {
            PromptError::DemosUnderZeroShot(..) => ApiError::invalid("demos_under_zero_shot", "prompting", e.to_string()),
            PromptError::MissingDemos(_) => ApiError::invalid("missing_demos", "prompting", e.to_string()),
            PromptError::TaskMismatch { .. } | PromptError::DemoLanguage { .. } => {
                ApiError::invalid("invalid_demos", "prompting", e.to_string())
            }
            PromptError::Template(_) => ApiError::new(500, "template_error", "prompting", e.to_string()),
            PromptError::Translation(t) => translation_error(t),
        }
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match &e {
            RecommendError::UnknownLanguage(_) => ApiError::new(404, "unknown_language", "recommend", e.to_string()),
            RecommendError::MissingRow { .. } => ApiError::new(404, "no_recommendation", "recommend", e.to_string()),
            _ => ApiError::new(500, "rule_table_error", "recommend", e.to_string()),
        }
    }
}

/// Compact JSON followed by a newline.
pub fn to_body<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("response serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub task: String,
    pub config_code: String,
    pub language: String,
    /// Task fields of the item to prompt for (`question`/`context`,
    /// `tokens` or `text`, `premise`/`hypothesis`, `document`).
    pub input: Value,
    /// Number of demonstrations; defaults to all supplied demos, or 1 from
    /// the service pool.
    #[serde(default)]
    pub k: Option<usize>,
    /// Demonstrations with gold fields, in `language`.
    #[serde(default)]
    pub demos: Option<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptResponse {
    pub prompt_text: String,
    pub expected_output_lang: String,
    pub config_code: String,
    pub component_spans: Vec<ComponentSpan>,
    pub demo_spans: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub task: String,
    pub language: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub config_code: String,
    pub resolved_neutrals: Vec<String>,
    pub task: TaskKind,
    pub language: String,
    pub model_family: String,
    pub resource_class: String,
    pub resource_level: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigsResponse {
    pub task: TaskKind,
    pub configs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguagesResponse {
    pub languages: Vec<LanguageInfo>,
}

pub fn parse_task(task: &str) -> Result<TaskKind, ApiError> {
    task.parse()
        .map_err(|e: crate::config_space::ConfigError| ApiError::new(400, "invalid_task", "config-space", e.to_string()))
}

fn field<'a>(input: &'a Value, name: &str) -> Result<&'a str, ApiError> {
    match input.get(name).and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(ApiError::invalid(
            "invalid_input",
            "corpus",
            format!("input field {name:?} must be a non-empty string"),
        )),
    }
}

/// Builds the instance to prompt for. Gold fields are not needed and are
/// filled with placeholders.
pub fn input_instance(task: TaskKind, language: &str, input: &Value) -> Result<TaskInstance, ApiError> {
    let payload = match task {
        TaskKind::Qa => Payload::Qa {
            question: field(input, "question")?.to_string(),
            context: field(input, "context")?.to_string(),
            answers: Vec::new(),
        },
        TaskKind::Ner => {
            let tokens: Vec<String> = match input.get("tokens").and_then(Value::as_array) {
                Some(items) => items
                    .iter()
                    .map(|t| t.as_str().map(str::to_string))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| ApiError::invalid("invalid_input", "corpus", "tokens must be strings"))?,
                None => field(input, "text")?.split_whitespace().map(str::to_string).collect(),
            };
            if tokens.is_empty() {
                return Err(ApiError::invalid("invalid_input", "corpus", "no tokens to tag"));
            }
            let tags = vec![crate::biose::BioseTag::O; tokens.len()];
            Payload::Ner { tokens, tags }
        }
        TaskKind::Nli => Payload::Nli {
            premise: field(input, "premise")?.to_string(),
            hypothesis: field(input, "hypothesis")?.to_string(),
            label: NliLabel::Neutral,
        },
        TaskKind::Sum => Payload::Sum {
            document: field(input, "document")?.to_string(),
            reference_summary: String::new(),
        },
    };
    Ok(TaskInstance {
        id: "input".into(),
        language: language.to_string(),
        payload,
    })
}

/// Shared handlers behind the CLI and the HTTP service.
pub struct Service {
    pub registry: LanguageRegistry,
    pub templates: PromptTemplates,
    pub rules: RuleTable,
    pub translator: Arc<dyn Translator>,
    pub cache: TranslationCache,
    /// Demonstration pool for few-shot requests that bring none.
    pub demo_pool: Vec<TaskInstance>,
}

impl Default for Service {
    fn default() -> Self {
        Service {
            registry: LanguageRegistry::bundled(),
            templates: PromptTemplates::bundled().clone(),
            rules: RuleTable::bundled(),
            translator: Arc::new(MockTranslator::new()),
            cache: TranslationCache::in_memory(),
            demo_pool: Vec::new(),
        }
    }
}

impl Service {
    pub fn configs(&self, task: &str) -> Result<ConfigsResponse, ApiError> {
        let task = parse_task(task)?;
        Ok(ConfigsResponse {
            task,
            configs: enumerate_configurations(task).iter().map(|c| c.code()).collect(),
        })
    }

    pub fn languages(&self) -> LanguagesResponse {
        let mut languages: Vec<LanguageInfo> = self.registry.iter().cloned().collect();
        languages.sort_by(|a, b| a.code.cmp(&b.code));
        LanguagesResponse { languages }
    }

    pub fn recommend(&self, req: &RecommendRequest) -> Result<RecommendResponse, ApiError> {
        let task = parse_task(&req.task)?;
        let rec = recommend(task, &req.language, &req.model, &self.registry, &self.rules)?;
        Ok(RecommendResponse {
            config_code: rec.config.code(),
            resolved_neutrals: rec.resolved_neutrals.iter().map(|c| c.as_str().to_string()).collect(),
            task,
            language: req.language.clone(),
            model_family: rec.row.model_family.clone(),
            resource_class: rec.resource_class.to_string(),
            resource_level: rec.resource_level.to_string(),
            provenance: serde_json::to_value(rec.provenance)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        })
    }

    pub fn prompt(&self, req: &PromptRequest) -> Result<PromptResponse, ApiError> {
        let task = parse_task(&req.task)?;
        let config = parse_config_code(&req.config_code, task)
            .map_err(|e| ApiError::new(400, "invalid_config", "config-space", e.to_string()))?;
        if self.registry.get(&req.language).is_none() {
            return Err(ApiError::new(
                404,
                "unknown_language",
                "config-space",
                format!("unknown language {:?}", req.language),
            ));
        }
        let instance = input_instance(task, &req.language, &req.input)?;
        let supplied = match &req.demos {
            Some(items) => items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut v = v.clone();
                    if let Some(obj) = v.as_object_mut() {
                        obj.entry("id").or_insert_with(|| Value::String(format!("demo-{i}")));
                        obj.entry("language").or_insert_with(|| Value::String(req.language.clone()));
                    }
                    parse_record(&v, task, i).map_err(|e| ApiError::invalid("invalid_demos", "corpus", e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let demos: Vec<TaskInstance> = if config.is_zero_shot() {
            if !supplied.is_empty() || req.k.unwrap_or(0) > 0 {
                let n = if supplied.is_empty() { req.k.unwrap_or(0) } else { supplied.len() };
                return Err(PromptError::DemosUnderZeroShot(config.code(), n).into());
            }
            Vec::new()
        } else if !supplied.is_empty() {
            let k = req.k.unwrap_or(supplied.len());
            supplied.into_iter().take(k).collect()
        } else {
            let k = req.k.unwrap_or(1);
            self.demo_pool
                .iter()
                .filter(|d| d.task() == task && d.language == req.language)
                .take(k)
                .cloned()
                .collect()
        };
        let compiled = PromptCompiler::new(&self.templates, &self.registry).compile(
            &config,
            &instance,
            &demos,
            &req.language,
            self.translator.as_ref(),
            &self.cache,
        )?;
        Ok(PromptResponse {
            prompt_text: compiled.text,
            expected_output_lang: compiled.expected_output_lang,
            config_code: config.code(),
            component_spans: compiled.component_spans,
            demo_spans: compiled.demo_spans.iter().map(|r| [r.start, r.end]).collect(),
        })
    }
}
