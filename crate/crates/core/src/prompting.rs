//! Prompt templates and compilation of a configuration plus an instance into
//! prompt text.
//!
//! Canonical template data is English; instance data is in its source
//! language. Each component is rendered in the language its configuration
//! slot asks for, translating whichever side is not already there.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biose;
use crate::config_space::{Component, ComponentLang, Configuration, LanguageRegistry, TaskKind};
use crate::corpus::{Payload, TaskInstance};
use crate::translation::{translate, TranslationCache, TranslationError, TranslationRequest, Translator};

const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.toml");
const OUTPUT_SLOT: &str = "{output_language}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("zero-shot configuration {0} was given {1} demonstrations")]
    DemosUnderZeroShot(String, usize),
    #[error("few-shot configuration {0} needs at least one demonstration")]
    MissingDemos(String),
    #[error("configuration is for {config} but the instance is a {instance} item")]
    TaskMismatch { config: TaskKind, instance: TaskKind },
    #[error("demonstration {index} is in {found}, expected {expected}")]
    DemoLanguage {
        index: usize,
        found: String,
        expected: String,
    },
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Translation(#[from] TranslationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub zero_shot: String,
    pub few_shot: String,
    pub example_separator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Canonical English instruction, with one `{output_language}` slot
    /// except for NLI.
    pub instruction: String,
    pub context: String,
    pub example: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub layout: Layout,
    pub qa: PromptTemplate,
    pub ner: PromptTemplate,
    pub sum: PromptTemplate,
    pub nli: PromptTemplate,
}

impl PromptTemplates {
    pub fn bundled() -> &'static PromptTemplates {
        static BUNDLED: OnceLock<PromptTemplates> = OnceLock::new();
        BUNDLED.get_or_init(|| Self::parse(DEFAULT_TEMPLATES).expect("bundled templates are valid"))
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let t: PromptTemplates = toml::from_str(text).map_err(|e| PromptError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn for_task(&self, task: TaskKind) -> &PromptTemplate {
        match task {
            TaskKind::Qa => &self.qa,
            TaskKind::Ner => &self.ner,
            TaskKind::Sum => &self.sum,
            TaskKind::Nli => &self.nli,
        }
    }

    fn validate(&self) -> Result<(), PromptError> {
        for task in TaskKind::ALL {
            let slots = self.for_task(task).instruction.matches(OUTPUT_SLOT).count();
            let expected = usize::from(task != TaskKind::Nli);
            if slots != expected {
                return Err(PromptError::Template(format!(
                    "{task} instruction has {slots} {OUTPUT_SLOT} slots, expected {expected}"
                )));
            }
        }
        for (name, layout) in [("zero_shot", &self.layout.zero_shot), ("few_shot", &self.layout.few_shot)] {
            let segs = parse_segments(layout);
            for slot in ["instruction", "context"] {
                if !segs.iter().any(|s| matches!(s, Segment::Slot(n) if *n == slot)) {
                    return Err(PromptError::Template(format!("layout {name} lacks {{{slot}}}")));
                }
            }
        }
        if !self.layout.few_shot.contains("{examples}") {
            return Err(PromptError::Template("few_shot layout lacks {examples}".into()));
        }
        Ok(())
    }
}

/// The canonical English instruction for a task, with its output-language
/// slot unfilled.
pub fn canonical_instructions(task: TaskKind) -> &'static str {
    &PromptTemplates::bundled().for_task(task).instruction
}

#[derive(Debug, PartialEq)]
enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn parse_segments(template: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                if open > 0 {
                    out.push(Segment::Text(&rest[..open]));
                }
                out.push(Segment::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Segment::Text(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    out
}

/// Single-pass slot substitution; returns the text and the byte range each
/// filled slot occupies. Unknown slots are left as written.
fn render(template: &str, values: &HashMap<&str, String>) -> (String, Vec<(String, Range<usize>)>) {
    let mut out = String::new();
    let mut spans = Vec::new();
    for seg in parse_segments(template) {
        match seg {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(name) => match values.get(name) {
                Some(v) => {
                    let start = out.len();
                    out.push_str(v);
                    spans.push((name.to_string(), start..out.len()));
                }
                None => {
                    out.push('{');
                    out.push_str(name);
                    out.push('}');
                }
            },
        }
    }
    (out, spans)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpan {
    pub component: Component,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPrompt {
    pub text: String,
    pub config: Configuration,
    pub expected_output_lang: String,
    /// Byte ranges of the instruction, examples and context blocks.
    pub component_spans: Vec<ComponentSpan>,
    /// Byte range of each demonstration block.
    pub demo_spans: Vec<Range<usize>>,
}

impl CompiledPrompt {
    pub fn span(&self, component: Component) -> Option<&str> {
        self.component_spans
            .iter()
            .find(|s| s.component == component)
            .map(|s| &self.text[s.start..s.end])
    }
}

/// Formats gold entities the way the instruction asks for them.
pub fn format_entities<S: AsRef<str>>(entities: &[(biose::EntityType, S)]) -> String {
    let items: Vec<String> = entities
        .iter()
        .map(|(t, s)| format!("({t}, {})", s.as_ref()))
        .collect();
    format!("[{}]", items.join(", "))
}

pub struct PromptCompiler<'a> {
    pub templates: &'a PromptTemplates,
    pub registry: &'a LanguageRegistry,
}

struct Ctx<'a> {
    translator: &'a dyn Translator,
    cache: &'a TranslationCache,
}

impl Ctx<'_> {
    fn tr(&self, text: &str, from: &str, to: &str) -> Result<String, TranslationError> {
        translate(&TranslationRequest::new(text, from, to), self.translator, self.cache)
    }
}

const ENGLISH: &str = "en";

impl<'a> PromptCompiler<'a> {
    pub fn new(templates: &'a PromptTemplates, registry: &'a LanguageRegistry) -> Self {
        PromptCompiler { templates, registry }
    }

    pub fn compile(
        &self,
        config: &Configuration,
        instance: &TaskInstance,
        demos: &[TaskInstance],
        source_lang: &str,
        translator: &dyn Translator,
        cache: &TranslationCache,
    ) -> Result<CompiledPrompt, PromptError> {
        let task = config.task();
        if instance.task() != task {
            return Err(PromptError::TaskMismatch {
                config: task,
                instance: instance.task(),
            });
        }
        match (config.examples().lang(), demos.len()) {
            (None, n) if n > 0 => return Err(PromptError::DemosUnderZeroShot(config.code(), n)),
            (Some(_), 0) => return Err(PromptError::MissingDemos(config.code())),
            _ => {}
        }
        for (index, d) in demos.iter().enumerate() {
            if d.language != instance.language || d.task() != task {
                return Err(PromptError::DemoLanguage {
                    index,
                    found: format!("{} {}", d.task(), d.language),
                    expected: format!("{task} {}", instance.language),
                });
            }
        }
        let ctx = Ctx { translator, cache };
        let template = self.templates.for_task(task);
        let lang_of = |l: ComponentLang| if l == ComponentLang::English { ENGLISH } else { source_lang };

        let expected_output_lang = lang_of(config.output()).to_string();
        let mut instruction = template.instruction.clone();
        if task != TaskKind::Nli {
            let name = self.registry.display_name(&expected_output_lang).to_string();
            instruction = instruction.replace(OUTPUT_SLOT, &name);
        }
        let instruction = ctx.tr(&instruction, ENGLISH, lang_of(config.instruction()))?;

        let context_lang = lang_of(config.context());
        let context_values = self.payload_values(instance, context_lang, false, &ctx)?;
        let (context, _) = render(&template.context, &context_values);

        let mut demo_blocks = Vec::with_capacity(demos.len());
        if let Some(l) = config.examples().lang() {
            for d in demos {
                let values = self.payload_values(d, lang_of(l), true, &ctx)?;
                demo_blocks.push(render(&template.example, &values).0);
            }
        }
        let sep = &self.templates.layout.example_separator;
        let mut demo_offsets = Vec::with_capacity(demo_blocks.len());
        let mut examples = String::new();
        for (i, block) in demo_blocks.iter().enumerate() {
            if i > 0 {
                examples.push_str(sep);
            }
            demo_offsets.push(examples.len()..examples.len() + block.len());
            examples.push_str(block);
        }

        let layout = if config.is_zero_shot() {
            &self.templates.layout.zero_shot
        } else {
            &self.templates.layout.few_shot
        };
        let mut values = HashMap::new();
        values.insert("instruction", instruction);
        values.insert("context", context);
        if !config.is_zero_shot() {
            values.insert("examples", examples);
        }
        let (text, slot_spans) = render(layout, &values);
        let mut component_spans = Vec::new();
        let mut demo_spans = Vec::new();
        for (name, range) in slot_spans {
            let component = match name.as_str() {
                "instruction" => Component::Instruction,
                "context" => Component::Context,
                "examples" => {
                    demo_spans.extend(demo_offsets.iter().map(|r| r.start + range.start..r.end + range.start));
                    Component::Examples
                }
                _ => continue,
            };
            component_spans.push(ComponentSpan {
                component,
                start: range.start,
                end: range.end,
            });
        }
        component_spans.sort_by_key(|s| s.start);
        Ok(CompiledPrompt {
            text,
            config: *config,
            expected_output_lang,
            component_spans,
            demo_spans,
        })
    }

    /// Slot values for an instance's context (and, for demonstrations, its
    /// gold answer), translated into `target` where needed.
    fn payload_values(
        &self,
        inst: &TaskInstance,
        target: &str,
        with_answer: bool,
        ctx: &Ctx<'_>,
    ) -> Result<HashMap<&'static str, String>, PromptError> {
        let from = inst.language.as_str();
        let tr = |s: &str| ctx.tr(s, from, target);
        let mut v = HashMap::new();
        match &inst.payload {
            Payload::Qa {
                question,
                context,
                answers,
            } => {
                v.insert("context", tr(context)?);
                v.insert("question", tr(question)?);
                if with_answer {
                    v.insert("answer", tr(&answers[0])?);
                }
            }
            Payload::Ner { tokens, tags } => {
                v.insert("sentence", tr(&tokens.join(" "))?);
                if with_answer {
                    let spans = biose::tags_to_spans(tags).unwrap_or_default();
                    let mut entities = Vec::with_capacity(spans.len());
                    for s in spans {
                        entities.push((s.entity_type, tr(&tokens[s.start..=s.end].join(" "))?));
                    }
                    v.insert("answer", format_entities(&entities));
                }
            }
            Payload::Nli {
                premise,
                hypothesis,
                label,
            } => {
                v.insert("premise", tr(premise)?);
                v.insert("hypothesis", tr(hypothesis)?);
                if with_answer {
                    v.insert("answer", label.as_str().to_string());
                }
            }
            Payload::Sum {
                document,
                reference_summary,
            } => {
                v.insert("document", tr(document)?);
                if with_answer {
                    v.insert("answer", tr(reference_summary)?);
                }
            }
        }
        Ok(v)
    }
}

/// Compiles with the bundled templates and language registry.
pub fn compile(
    config: &Configuration,
    instance: &TaskInstance,
    demos: &[TaskInstance],
    source_lang: &str,
    translator: &dyn Translator,
    cache: &TranslationCache,
) -> Result<CompiledPrompt, PromptError> {
    static REGISTRY: OnceLock<LanguageRegistry> = OnceLock::new();
    let registry = REGISTRY.get_or_init(LanguageRegistry::bundled);
    PromptCompiler::new(PromptTemplates::bundled(), registry).compile(config, instance, demos, source_lang, translator, cache)
}
