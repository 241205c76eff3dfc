//! Languages, resource classes and the space of selective pre-translation
//! configurations.
//!
//! A [`Configuration`] assigns a language to each of the four prompt
//! components: instruction, context, examples and output. Examples may also
//! be absent (zero-shot). The textual wire form is a code over `{S, E, Z}` in
//! the order instruction, context, examples, output, e.g. `"SSZE"`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const DEFAULT_REGISTRY: &str = include_str!("../data/languages.jsonl");
const TABLE9: &str = include_str!("../data/table9_configurations.csv");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("token share must be a non-negative percentage, got {0}")]
    NegativeShare(f64),
    #[error("invalid configuration code {code:?}: {slot} slot: {reason}")]
    Parse {
        code: String,
        slot: &'static str,
        reason: String,
    },
    #[error("NLI output language is bound to the instruction language")]
    NliOutputMismatch,
    #[error("unknown task {0:?} (expected qa, ner, nli or sum)")]
    UnknownTask(String),
    #[error("unknown resource class {0:?}")]
    UnknownClass(String),
    #[error("language {code}: declared class {declared} contradicts token share {share}% (class {derived})")]
    ClassMismatch {
        code: String,
        declared: ResourceClass,
        share: f64,
        derived: ResourceClass,
    },
    #[error("language {0} has neither a token share nor a declared class")]
    MissingClass(String),
    #[error("duplicate language code {0}")]
    DuplicateLanguage(String),
    #[error("registry line {line}: {message}")]
    Registry { line: usize, message: String },
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// The four evaluated tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Qa,
    Ner,
    Nli,
    Sum,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Qa, TaskKind::Ner, TaskKind::Nli, TaskKind::Sum];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Qa => "qa",
            TaskKind::Ner => "ner",
            TaskKind::Nli => "nli",
            TaskKind::Sum => "sum",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qa" => Ok(TaskKind::Qa),
            "ner" => Ok(TaskKind::Ner),
            "nli" => Ok(TaskKind::Nli),
            "sum" | "summarization" => Ok(TaskKind::Sum),
            _ => Err(ConfigError::UnknownTask(s.to_string())),
        }
    }
}

/// Resource class by share of pre-training tokens. Ordered from richest (A)
/// to unrepresented (D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceClass {
    A,
    B,
    C,
    D,
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResourceClass::A => "A",
            ResourceClass::B => "B",
            ResourceClass::C => "C",
            ResourceClass::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for ResourceClass {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(ResourceClass::A),
            "B" | "b" => Ok(ResourceClass::B),
            "C" | "c" => Ok(ResourceClass::C),
            "D" | "d" => Ok(ResourceClass::D),
            _ => Err(ConfigError::UnknownClass(s.to_string())),
        }
    }
}

/// Maps a token share (in percent) to its resource class:
/// A for p >= 0.1, B for 0.01 < p < 0.1, C for 0 < p <= 0.01, D for p = 0.
pub fn classify_language(token_share: f64) -> Result<ResourceClass, ConfigError> {
    if token_share.is_nan() || token_share < 0.0 {
        return Err(ConfigError::NegativeShare(token_share));
    }
    Ok(if token_share >= 0.1 {
        ResourceClass::A
    } else if token_share > 0.01 {
        ResourceClass::B
    } else if token_share > 0.0 {
        ResourceClass::C
    } else {
        ResourceClass::D
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageInfo {
    pub code: String,
    pub name: String,
    pub script: String,
    #[serde(rename = "token_share_percent")]
    pub token_share: Option<f64>,
    #[serde(rename = "class")]
    pub resource_class: ResourceClass,
}

impl LanguageInfo {
    /// Builds a language whose class is derived from its token share.
    pub fn with_share(code: &str, name: &str, script: &str, share: f64) -> Result<Self, ConfigError> {
        Ok(LanguageInfo {
            code: code.to_string(),
            name: name.to_string(),
            script: script.to_string(),
            token_share: Some(share),
            resource_class: classify_language(share)?,
        })
    }

    /// Builds a language with no known token share; the class must be declared.
    pub fn with_class(code: &str, name: &str, script: &str, class: ResourceClass) -> Self {
        LanguageInfo {
            code: code.to_string(),
            name: name.to_string(),
            script: script.to_string(),
            token_share: None,
            resource_class: class,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(share) = self.token_share {
            let derived = classify_language(share)?;
            if derived != self.resource_class {
                return Err(ConfigError::ClassMismatch {
                    code: self.code.clone(),
                    declared: self.resource_class,
                    share,
                    derived,
                });
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RegistryLine {
    code: String,
    name: String,
    #[serde(default)]
    script: String,
    #[serde(default)]
    token_share_percent: Option<f64>,
    #[serde(default)]
    class: Option<String>,
}

/// Language registry keyed by code.
#[derive(Debug, Clone, Default)]
pub struct LanguageRegistry {
    languages: BTreeMap<String, LanguageInfo>,
}

impl LanguageRegistry {
    /// The bundled registry (GPT-3 token shares per language).
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("bundled language registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses line-delimited JSON records `{code, name, script, token_share_percent, class}`.
    /// A record must carry a share, a class, or both (in which case they must agree).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut registry = LanguageRegistry::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let raw: RegistryLine = serde_json::from_str(line).map_err(|e| ConfigError::Registry {
                line: idx + 1,
                message: e.to_string(),
            })?;
            let info = match (raw.token_share_percent, raw.class) {
                (Some(share), class) => {
                    let mut info = LanguageInfo::with_share(&raw.code, &raw.name, &raw.script, share)?;
                    if let Some(class) = class {
                        info.resource_class = class.parse()?;
                    }
                    info
                }
                (None, Some(class)) => {
                    LanguageInfo::with_class(&raw.code, &raw.name, &raw.script, class.parse()?)
                }
                (None, None) => return Err(ConfigError::MissingClass(raw.code)),
            };
            registry.insert(info)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, info: LanguageInfo) -> Result<(), ConfigError> {
        info.validate()?;
        if self.languages.contains_key(&info.code) {
            return Err(ConfigError::DuplicateLanguage(info.code));
        }
        self.languages.insert(info.code.clone(), info);
        Ok(())
    }

    pub fn get(&self, code: &str) -> Option<&LanguageInfo> {
        self.languages.get(code)
    }

    pub fn require(&self, code: &str) -> Result<&LanguageInfo, ConfigError> {
        self.get(code)
            .ok_or_else(|| ConfigError::UnknownLanguage(code.to_string()))
    }

    /// English display name, falling back to the code itself.
    pub fn display_name<'a>(&'a self, code: &'a str) -> &'a str {
        self.get(code).map(|l| l.name.as_str()).unwrap_or(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageInfo> {
        self.languages.values()
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }
}

/// Language of a single prompt component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentLang {
    Source,
    English,
}

impl ComponentLang {
    pub const ALL: [ComponentLang; 2] = [ComponentLang::Source, ComponentLang::English];

    pub fn letter(self) -> char {
        match self {
            ComponentLang::Source => 'S',
            ComponentLang::English => 'E',
        }
    }

    fn rank(self) -> u8 {
        match self {
            ComponentLang::Source => 0,
            ComponentLang::English => 1,
        }
    }
}

/// Language of the demonstrations, or `None` for a zero-shot prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExamplesMode {
    None,
    Source,
    English,
}

impl ExamplesMode {
    pub const ALL: [ExamplesMode; 3] = [ExamplesMode::Source, ExamplesMode::English, ExamplesMode::None];

    pub fn letter(self) -> char {
        match self {
            ExamplesMode::Source => 'S',
            ExamplesMode::English => 'E',
            ExamplesMode::None => 'Z',
        }
    }

    pub fn lang(self) -> Option<ComponentLang> {
        match self {
            ExamplesMode::None => None,
            ExamplesMode::Source => Some(ComponentLang::Source),
            ExamplesMode::English => Some(ComponentLang::English),
        }
    }

    fn rank(self) -> u8 {
        match self {
            ExamplesMode::Source => 0,
            ExamplesMode::English => 1,
            ExamplesMode::None => 2,
        }
    }
}

/// One of the four prompt components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Instruction,
    Context,
    Examples,
    Output,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Instruction,
        Component::Context,
        Component::Examples,
        Component::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Instruction => "instruction",
            Component::Context => "context",
            Component::Examples => "examples",
            Component::Output => "output",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "instruction" | "i" => Ok(Component::Instruction),
            "context" | "x" => Ok(Component::Context),
            "examples" | "e" => Ok(Component::Examples),
            "output" | "o" => Ok(Component::Output),
            other => Err(format!("unknown component {other:?}")),
        }
    }
}

/// A selective pre-translation configuration for one task.
///
/// For NLI the output language is not free: it always equals the instruction
/// language, which [`Configuration::new`] enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    task: TaskKind,
    instruction: ComponentLang,
    context: ComponentLang,
    examples: ExamplesMode,
    output: ComponentLang,
}

impl Configuration {
    pub fn new(
        task: TaskKind,
        instruction: ComponentLang,
        context: ComponentLang,
        examples: ExamplesMode,
        output: ComponentLang,
    ) -> Result<Self, ConfigError> {
        if task == TaskKind::Nli && output != instruction {
            return Err(ConfigError::NliOutputMismatch);
        }
        Ok(Configuration {
            task,
            instruction,
            context,
            examples,
            output,
        })
    }

    /// NLI constructor; the output language follows the instruction.
    pub fn nli(instruction: ComponentLang, context: ComponentLang, examples: ExamplesMode) -> Self {
        Configuration {
            task: TaskKind::Nli,
            instruction,
            context,
            examples,
            output: instruction,
        }
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn instruction(&self) -> ComponentLang {
        self.instruction
    }

    pub fn context(&self) -> ComponentLang {
        self.context
    }

    pub fn examples(&self) -> ExamplesMode {
        self.examples
    }

    pub fn output(&self) -> ComponentLang {
        self.output
    }

    pub fn is_zero_shot(&self) -> bool {
        self.examples == ExamplesMode::None
    }

    /// Language of a component; `None` only for the examples of a zero-shot prompt.
    pub fn component(&self, component: Component) -> Option<ComponentLang> {
        match component {
            Component::Instruction => Some(self.instruction),
            Component::Context => Some(self.context),
            Component::Examples => self.examples.lang(),
            Component::Output => Some(self.output),
        }
    }

    /// Canonical 4-letter code in instruction, context, examples, output order.
    pub fn code(&self) -> String {
        [
            self.instruction.letter(),
            self.context.letter(),
            self.examples.letter(),
            self.output.letter(),
        ]
        .iter()
        .collect()
    }

    fn sort_key(&self) -> (TaskKind, u8, u8, u8, u8) {
        (
            self.task,
            self.instruction.rank(),
            self.context.rank(),
            self.examples.rank(),
            self.output.rank(),
        )
    }
}

impl PartialOrd for Configuration {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Configuration {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl Serialize for Configuration {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            task: TaskKind,
            code: &'a str,
        }
        Wire {
            task: self.task,
            code: &self.code(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            task: TaskKind,
            code: String,
        }
        let wire = Wire::deserialize(deserializer)?;
        parse_config_code(&wire.code, wire.task).map_err(serde::de::Error::custom)
    }
}

/// All valid configurations for a task in canonical order
/// (lexicographic over instruction, context, examples, output with S < E < Z).
///
/// 24 for QA, NER and SUM; 12 for NLI.
pub fn enumerate_configurations(task: TaskKind) -> Vec<Configuration> {
    let mut out = Vec::with_capacity(24);
    for instruction in ComponentLang::ALL {
        for context in ComponentLang::ALL {
            for examples in ExamplesMode::ALL {
                if task == TaskKind::Nli {
                    out.push(Configuration::nli(instruction, context, examples));
                    continue;
                }
                for output in ComponentLang::ALL {
                    out.push(Configuration {
                        task,
                        instruction,
                        context,
                        examples,
                        output,
                    });
                }
            }
        }
    }
    out
}

fn parse_lang(code: &str, c: char, slot: &'static str) -> Result<ComponentLang, ConfigError> {
    match c {
        'S' | 's' => Ok(ComponentLang::Source),
        'E' | 'e' => Ok(ComponentLang::English),
        'Z' | 'z' => Err(ConfigError::Parse {
            code: code.to_string(),
            slot,
            reason: "Z (zero-shot) is only valid in the examples slot".into(),
        }),
        other => Err(ConfigError::Parse {
            code: code.to_string(),
            slot,
            reason: format!("unexpected character {other:?}"),
        }),
    }
}

/// Parses a configuration code such as `"SSZE"`. NLI also accepts the 3-letter
/// form (instruction, context, examples); a 4-letter NLI code must have its
/// output equal to its instruction.
pub fn parse_config_code(code: &str, task: TaskKind) -> Result<Configuration, ConfigError> {
    let chars: Vec<char> = code.trim().chars().collect();
    let valid_len = chars.len() == 4 || (task == TaskKind::Nli && chars.len() == 3);
    if !valid_len {
        return Err(ConfigError::Parse {
            code: code.to_string(),
            slot: "length",
            reason: format!(
                "expected 4 letters{}, got {}",
                if task == TaskKind::Nli { " (or 3 for NLI)" } else { "" },
                chars.len()
            ),
        });
    }
    let instruction = parse_lang(code, chars[0], "instruction")?;
    let context = parse_lang(code, chars[1], "context")?;
    let examples = match chars[2] {
        'S' | 's' => ExamplesMode::Source,
        'E' | 'e' => ExamplesMode::English,
        'Z' | 'z' => ExamplesMode::None,
        other => {
            return Err(ConfigError::Parse {
                code: code.to_string(),
                slot: "examples",
                reason: format!("unexpected character {other:?}"),
            })
        }
    };
    let output = match chars.get(3) {
        Some(&c) => parse_lang(code, c, "output")?,
        None => instruction,
    };
    if task == TaskKind::Nli && output != instruction {
        return Err(ConfigError::Parse {
            code: code.to_string(),
            slot: "output",
            reason: "NLI output must equal the instruction language".into(),
        });
    }
    Configuration::new(task, instruction, context, examples, output)
}

/// The 24 configurations as listed in the bundled configuration table,
/// in the table's own row order.
pub fn table9_configurations(task: TaskKind) -> Vec<Configuration> {
    let word = |w: &str| -> ComponentLang {
        match w.trim() {
            "Source" => ComponentLang::Source,
            "English" => ComponentLang::English,
            other => panic!("bad table cell {other}"),
        }
    };
    TABLE9
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            let examples = match cells[2].trim() {
                "-" => ExamplesMode::None,
                "Source" => ExamplesMode::Source,
                _ => ExamplesMode::English,
            };
            Configuration {
                task,
                instruction: word(cells[0]),
                context: word(cells[1]),
                examples,
                output: word(cells[3]),
            }
        })
        .collect()
}
