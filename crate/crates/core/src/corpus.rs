//! Task datasets in a unified line-delimited schema, sampling, and converters
//! from the public dataset export formats.
//!
//! One JSON object per line; required fields per task:
//!
//! | task | fields |
//! |------|--------|
//! | qa   | `id`, `language`, `question`, `context`, `answers` (non-empty list) |
//! | ner  | `id`, `language`, `tokens`, `tags` (BIOSE labels, same length) |
//! | nli  | `id`, `language`, `premise`, `hypothesis`, `label` |
//! | sum  | `id`, `language`, `document`, `reference_summary` |

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::biose::{self, BioseTag, EntitySpan, EntityType};
use crate::config_space::TaskKind;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {index}: field `{field}`: {message}")]
    Schema {
        index: usize,
        field: String,
        message: String,
    },
    #[error("record {index}: {tokens} tokens but {tags} tags")]
    LengthMismatch { index: usize, tokens: usize, tags: usize },
    #[error("record {index}: {source}")]
    Biose {
        index: usize,
        #[source]
        source: biose::BioseError,
    },
    #[error("cannot split {len} instances into a pool of {k}")]
    PoolTooLarge { k: usize, len: usize },
    #[error("sample policy limits must be positive")]
    BadPolicy,
    #[error("{format} input: {message}")]
    Convert { format: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Contradiction => "contradiction",
            NliLabel::Neutral => "neutral",
        }
    }

    /// XNLI/MNLI integer convention: 0 entailment, 1 neutral, 2 contradiction.
    pub fn from_index(i: u64) -> Option<Self> {
        match i {
            0 => Some(NliLabel::Entailment),
            1 => Some(NliLabel::Neutral),
            2 => Some(NliLabel::Contradiction),
            _ => None,
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NliLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "entailment" => Ok(NliLabel::Entailment),
            "contradiction" => Ok(NliLabel::Contradiction),
            "neutral" => Ok(NliLabel::Neutral),
            other => Err(format!("unknown NLI label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Payload {
    Qa {
        question: String,
        context: String,
        answers: Vec<String>,
    },
    Ner {
        tokens: Vec<String>,
        tags: Vec<BioseTag>,
    },
    Nli {
        premise: String,
        hypothesis: String,
        label: NliLabel,
    },
    Sum {
        document: String,
        reference_summary: String,
    },
}

impl Payload {
    pub fn task(&self) -> TaskKind {
        match self {
            Payload::Qa { .. } => TaskKind::Qa,
            Payload::Ner { .. } => TaskKind::Ner,
            Payload::Nli { .. } => TaskKind::Nli,
            Payload::Sum { .. } => TaskKind::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub language: String,
    #[serde(flatten)]
    pub payload: Payload,
}

impl TaskInstance {
    pub fn task(&self) -> TaskKind {
        self.payload.task()
    }

    /// Length in characters of the text the prompt's context block carries.
    pub fn context_units(&self) -> usize {
        let chars = |s: &str| s.chars().count();
        match &self.payload {
            Payload::Qa { question, context, .. } => chars(context) + chars(question),
            Payload::Ner { tokens, .. } => {
                tokens.iter().map(|t| chars(t)).sum::<usize>() + tokens.len().saturating_sub(1)
            }
            Payload::Nli { premise, hypothesis, .. } => chars(premise) + chars(hypothesis),
            Payload::Sum { document, .. } => chars(document),
        }
    }

    /// Gold entity spans for NER instances.
    pub fn gold_spans(&self) -> Option<Vec<EntitySpan>> {
        match &self.payload {
            Payload::Ner { tags, .. } => biose::tags_to_spans(tags).ok(),
            _ => None,
        }
    }

    /// Serializes to the unified flat record layout.
    pub fn to_record(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("instances serialize");
        if let Value::Object(map) = &mut v {
            map.remove("task");
        }
        v
    }

    pub fn validate(&self, index: usize) -> Result<(), CorpusError> {
        match &self.payload {
            Payload::Qa { answers, .. } if answers.is_empty() => Err(CorpusError::Schema {
                index,
                field: "answers".into(),
                message: "must be non-empty".into(),
            }),
            Payload::Ner { tokens, tags } => {
                if tokens.len() != tags.len() {
                    return Err(CorpusError::LengthMismatch {
                        index,
                        tokens: tokens.len(),
                        tags: tags.len(),
                    });
                }
                biose::validate(tags).map_err(|source| CorpusError::Biose { index, source })
            }
            _ => Ok(()),
        }
    }
}

fn field<'a>(obj: &'a Map<String, Value>, index: usize, name: &str) -> Result<&'a Value, CorpusError> {
    obj.get(name).ok_or_else(|| CorpusError::Schema {
        index,
        field: name.into(),
        message: "missing".into(),
    })
}

fn string_field(obj: &Map<String, Value>, index: usize, name: &str) -> Result<String, CorpusError> {
    match field(obj, index, name)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if name == "id" => Ok(n.to_string()),
        other => Err(CorpusError::Schema {
            index,
            field: name.into(),
            message: format!("expected a string, got {other}"),
        }),
    }
}

fn string_list(obj: &Map<String, Value>, index: usize, name: &str) -> Result<Vec<String>, CorpusError> {
    let bad = |message: String| CorpusError::Schema {
        index,
        field: name.into(),
        message,
    };
    match field(obj, index, name)? {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(bad(format!("expected strings, found {other}"))),
            })
            .collect(),
        other => Err(bad(format!("expected a list, got {other}"))),
    }
}

/// Parses one unified-schema record.
pub fn parse_record(value: &Value, task: TaskKind, index: usize) -> Result<TaskInstance, CorpusError> {
    let obj = value.as_object().ok_or_else(|| CorpusError::Schema {
        index,
        field: "<record>".into(),
        message: "expected a JSON object".into(),
    })?;
    let id = string_field(obj, index, "id")?;
    let language = string_field(obj, index, "language")?;
    let payload = match task {
        TaskKind::Qa => Payload::Qa {
            question: string_field(obj, index, "question")?,
            context: string_field(obj, index, "context")?,
            answers: string_list(obj, index, "answers")?,
        },
        TaskKind::Ner => {
            let tokens = string_list(obj, index, "tokens")?;
            let raw_tags = string_list(obj, index, "tags")?;
            let tags = raw_tags
                .iter()
                .map(|t| t.parse::<BioseTag>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CorpusError::Schema {
                    index,
                    field: "tags".into(),
                    message: e.to_string(),
                })?;
            Payload::Ner { tokens, tags }
        }
        TaskKind::Nli => {
            let label = match field(obj, index, "label")? {
                Value::String(s) => s.parse::<NliLabel>().ok(),
                Value::Number(n) => n.as_u64().and_then(NliLabel::from_index),
                _ => None,
            }
            .ok_or_else(|| CorpusError::Schema {
                index,
                field: "label".into(),
                message: "expected entailment, contradiction or neutral".into(),
            })?;
            Payload::Nli {
                premise: string_field(obj, index, "premise")?,
                hypothesis: string_field(obj, index, "hypothesis")?,
                label,
            }
        }
        TaskKind::Sum => Payload::Sum {
            document: string_field(obj, index, "document")?,
            reference_summary: string_field(obj, index, "reference_summary")?,
        },
    };
    let instance = TaskInstance { id, language, payload };
    instance.validate(index)?;
    Ok(instance)
}

/// Reads unified-schema records from any reader. Blank lines are skipped;
/// record indices count non-blank lines from 0.
pub fn read_dataset<R: Read>(reader: R, task: TaskKind) -> Result<Vec<TaskInstance>, CorpusError> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let index = out.len();
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            index,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        out.push(parse_record(&value, task, index)?);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, task: TaskKind) -> Result<Vec<TaskInstance>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, task)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePolicy {
    pub max_instances: usize,
    /// Context budget in characters.
    pub max_context_units: usize,
}

impl Default for SamplePolicy {
    fn default() -> Self {
        SamplePolicy {
            max_instances: 250,
            max_context_units: 16_000,
        }
    }
}

impl SamplePolicy {
    pub fn new(max_instances: usize, max_context_units: usize) -> Result<Self, CorpusError> {
        if max_instances == 0 || max_context_units == 0 {
            return Err(CorpusError::BadPolicy);
        }
        Ok(SamplePolicy {
            max_instances,
            max_context_units,
        })
    }
}

/// Drops instances over the context budget, then draws a seeded uniform
/// sample without replacement. Survivors keep their input order.
pub fn sample(instances: &[TaskInstance], policy: &SamplePolicy, seed: u64) -> Vec<TaskInstance> {
    let eligible: Vec<&TaskInstance> = instances
        .iter()
        .filter(|i| i.context_units() <= policy.max_context_units)
        .collect();
    if eligible.len() <= policy.max_instances {
        return eligible.into_iter().cloned().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), policy.max_instances).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| eligible[i].clone()).collect()
}

/// Splits off a seeded pool of `k` demonstration instances; the remainder is
/// the evaluation set. Both keep input order.
pub fn split_examples_pool(
    instances: &[TaskInstance],
    k: usize,
    seed: u64,
) -> Result<(Vec<TaskInstance>, Vec<TaskInstance>), CorpusError> {
    if k >= instances.len() {
        return Err(CorpusError::PoolTooLarge {
            k,
            len: instances.len(),
        });
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_pool = vec![false; instances.len()];
    for &i in &order[..k] {
        in_pool[i] = true;
    }
    let (mut pool, mut eval) = (Vec::with_capacity(k), Vec::with_capacity(instances.len() - k));
    for (i, inst) in instances.iter().enumerate() {
        if in_pool[i] {
            pool.push(inst.clone());
        } else {
            eval.push(inst.clone());
        }
    }
    Ok((pool, eval))
}

/// Public export formats accepted by [`convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// SQuAD-style JSON (XQuAD, IndicQA).
    Squad,
    /// Line-delimited `{tokens, ner_tags}` with IOB2 tags as strings or
    /// WikiANN integer ids.
    Wikiann,
    /// Two-column CoNLL text (MasakhaNER), blank line between sentences.
    Conll,
    /// XNLI tab-separated export with a header row.
    XnliTsv,
    /// Line-delimited `{premise, hypothesis, label}`.
    XnliJsonl,
    /// Line-delimited `{id, text, summary}` (XL-Sum).
    Xlsum,
}

impl SourceFormat {
    pub fn task(self) -> TaskKind {
        match self {
            SourceFormat::Squad => TaskKind::Qa,
            SourceFormat::Wikiann | SourceFormat::Conll => TaskKind::Ner,
            SourceFormat::XnliTsv | SourceFormat::XnliJsonl => TaskKind::Nli,
            SourceFormat::Xlsum => TaskKind::Sum,
        }
    }
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squad" | "xquad" | "indicqa" => Ok(SourceFormat::Squad),
            "wikiann" => Ok(SourceFormat::Wikiann),
            "conll" | "masakhaner" => Ok(SourceFormat::Conll),
            "xnli-tsv" => Ok(SourceFormat::XnliTsv),
            "xnli-jsonl" | "xnli" => Ok(SourceFormat::XnliJsonl),
            "xlsum" | "xl-sum" => Ok(SourceFormat::Xlsum),
            other => Err(format!("unknown source format {other:?}")),
        }
    }
}

const WIKIANN_TAGS: [&str; 7] = ["O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC"];

/// Converts IOB/IOB2 labels to BIOSE. Types outside PER/ORG/LOC (e.g. DATE)
/// become `O`; a stray `I-` opens a new span.
pub fn iob_to_biose<S: AsRef<str>>(labels: &[S]) -> Result<Vec<BioseTag>, String> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut current: Option<EntitySpan> = None;
    for (i, raw) in labels.iter().enumerate() {
        let raw = raw.as_ref().trim();
        let (prefix, ty) = match raw.split_once('-') {
            Some((p, t)) => (p, t.parse::<EntityType>().ok()),
            None if raw == "O" => ("O", None),
            None => return Err(format!("bad IOB label {raw:?} at {i}")),
        };
        let continues = prefix == "I"
            && matches!((current, ty), (Some(c), Some(t)) if c.entity_type == t && c.end + 1 == i);
        if continues {
            if let Some(c) = current.as_mut() {
                c.end = i;
            }
            continue;
        }
        if let Some(c) = current.take() {
            spans.push(c);
        }
        match (prefix, ty) {
            ("B", Some(t)) | ("I", Some(t)) => current = Some(EntitySpan::new(t, i, i)),
            ("B", None) | ("I", None) | ("O", None) => {}
            _ => return Err(format!("bad IOB label {raw:?} at {i}")),
        }
    }
    spans.extend(current);
    biose::spans_to_tags(&spans, labels.len()).map_err(|e| e.to_string())
}

fn conv_err(format: &'static str, message: impl Into<String>) -> CorpusError {
    CorpusError::Convert {
        format,
        message: message.into(),
    }
}

fn ner_instance(id: String, language: &str, tokens: Vec<String>, iob: &[String]) -> Result<TaskInstance, String> {
    let tags = iob_to_biose(iob)?;
    Ok(TaskInstance {
        id,
        language: language.to_string(),
        payload: Payload::Ner { tokens, tags },
    })
}

/// Converts a public export into unified instances tagged with `language`.
pub fn convert<R: Read>(format: SourceFormat, mut reader: R, language: &str) -> Result<Vec<TaskInstance>, CorpusError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|source| CorpusError::Io {
            path: "<input>".into(),
            source,
        })?;
    let out = match format {
        SourceFormat::Squad => convert_squad(&text, language)?,
        SourceFormat::Wikiann => {
            let mut out = Vec::new();
            for (n, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let v: Value = serde_json::from_str(line).map_err(|e| conv_err("wikiann", format!("line {}: {e}", n + 1)))?;
                let tokens: Vec<String> = serde_json::from_value(v["tokens"].clone())
                    .map_err(|e| conv_err("wikiann", format!("line {}: tokens: {e}", n + 1)))?;
                let tags: Vec<String> = match &v["ner_tags"] {
                    Value::Array(items) => items
                        .iter()
                        .map(|t| match t {
                            Value::Number(i) => i
                                .as_u64()
                                .and_then(|i| WIKIANN_TAGS.get(i as usize))
                                .map(|s| s.to_string())
                                .ok_or_else(|| conv_err("wikiann", format!("line {}: bad tag id {i}", n + 1))),
                            Value::String(s) => Ok(s.clone()),
                            other => Err(conv_err("wikiann", format!("line {}: bad tag {other}", n + 1))),
                        })
                        .collect::<Result<_, _>>()?,
                    _ => return Err(conv_err("wikiann", format!("line {}: missing ner_tags", n + 1))),
                };
                let id = v.get("id").map(|i| i.to_string().trim_matches('"').to_string()).unwrap_or_else(|| n.to_string());
                out.push(ner_instance(id, language, tokens, &tags).map_err(|m| conv_err("wikiann", m))?);
            }
            out
        }
        SourceFormat::Conll => {
            let mut out = Vec::new();
            let (mut tokens, mut tags) = (Vec::new(), Vec::new());
            let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>| -> Result<(), CorpusError> {
                if !tokens.is_empty() {
                    let id = out.len().to_string();
                    out.push(
                        ner_instance(id, language, std::mem::take(tokens), &std::mem::take(tags))
                            .map_err(|m| conv_err("conll", m))?,
                    );
                }
                Ok(())
            };
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with("-DOCSTART-") {
                    flush(&mut tokens, &mut tags)?;
                    continue;
                }
                let mut cols = line.split_whitespace();
                let (tok, tag) = (cols.next(), cols.last());
                match (tok, tag) {
                    (Some(tok), Some(tag)) => {
                        tokens.push(tok.to_string());
                        tags.push(tag.to_string());
                    }
                    _ => return Err(conv_err("conll", format!("line {}: expected token and tag", n + 1))),
                }
            }
            flush(&mut tokens, &mut tags)?;
            out
        }
        SourceFormat::XnliTsv => convert_xnli_tsv(&text, language)?,
        SourceFormat::XnliJsonl => {
            let mut out = Vec::new();
            for (n, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let v: Value = serde_json::from_str(line).map_err(|e| conv_err("xnli-jsonl", format!("line {}: {e}", n + 1)))?;
                let mut record = json!({
                    "id": v.get("id").cloned().unwrap_or_else(|| json!(n.to_string())),
                    "language": language,
                    "premise": v["premise"],
                    "hypothesis": v["hypothesis"],
                    "label": v["label"],
                });
                if let Some(id) = record.get_mut("id") {
                    if let Value::Number(num) = id {
                        *id = json!(num.to_string());
                    }
                }
                out.push(parse_record(&record, TaskKind::Nli, n)?);
            }
            out
        }
        SourceFormat::Xlsum => {
            let mut out = Vec::new();
            for (n, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let v: Value = serde_json::from_str(line).map_err(|e| conv_err("xlsum", format!("line {}: {e}", n + 1)))?;
                let record = json!({
                    "id": v.get("id").cloned().unwrap_or_else(|| json!(n.to_string())),
                    "language": language,
                    "document": v["text"],
                    "reference_summary": v["summary"],
                });
                out.push(parse_record(&record, TaskKind::Sum, n)?);
            }
            out
        }
    };
    Ok(out)
}

fn convert_squad(text: &str, language: &str) -> Result<Vec<TaskInstance>, CorpusError> {
    #[derive(Deserialize)]
    struct Root {
        data: Vec<Article>,
    }
    #[derive(Deserialize)]
    struct Article {
        paragraphs: Vec<Paragraph>,
    }
    #[derive(Deserialize)]
    struct Paragraph {
        context: String,
        qas: Vec<Qa>,
    }
    #[derive(Deserialize)]
    struct Qa {
        id: String,
        question: String,
        answers: Vec<Answer>,
    }
    #[derive(Deserialize)]
    struct Answer {
        text: String,
    }
    let root: Root = serde_json::from_str(text).map_err(|e| conv_err("squad", e.to_string()))?;
    let mut out = Vec::new();
    for para in root.data.into_iter().flat_map(|a| a.paragraphs) {
        for qa in para.qas {
            let mut answers: Vec<String> = Vec::new();
            for a in qa.answers {
                if !answers.contains(&a.text) {
                    answers.push(a.text);
                }
            }
            if answers.is_empty() {
                continue;
            }
            out.push(TaskInstance {
                id: qa.id,
                language: language.to_string(),
                payload: Payload::Qa {
                    question: qa.question,
                    context: para.context.clone(),
                    answers,
                },
            });
        }
    }
    Ok(out)
}

fn convert_xnli_tsv(text: &str, language: &str) -> Result<Vec<TaskInstance>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| conv_err("xnli-tsv", e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let premise = col("sentence1").or_else(|| col("premise")).ok_or_else(|| conv_err("xnli-tsv", "no sentence1 column"))?;
    let hypothesis = col("sentence2").or_else(|| col("hypothesis")).ok_or_else(|| conv_err("xnli-tsv", "no sentence2 column"))?;
    let label = col("gold_label").or_else(|| col("label")).ok_or_else(|| conv_err("xnli-tsv", "no gold_label column"))?;
    let lang_col = col("language");
    let id_col = col("pairID").or_else(|| col("id"));
    let mut by_lang: BTreeMap<usize, TaskInstance> = BTreeMap::new();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| conv_err("xnli-tsv", e.to_string()))?;
        if let Some(lc) = lang_col {
            if row.get(lc).is_some_and(|l| l != language) {
                continue;
            }
        }
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let record = json!({
            "id": id_col.map(get).unwrap_or_else(|| n.to_string()),
            "language": language,
            "premise": get(premise),
            "hypothesis": get(hypothesis),
            "label": get(label),
        });
        by_lang.insert(n, parse_record(&record, TaskKind::Nli, n)?);
    }
    Ok(by_lang.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qa(id: usize, context: &str) -> TaskInstance {
        TaskInstance {
            id: id.to_string(),
            language: "de".into(),
            payload: Payload::Qa {
                question: "q".into(),
                context: context.into(),
                answers: vec!["a".into()],
            },
        }
    }

    #[test]
    fn loads_qa_record() {
        let data = r#"{"id":"1","language":"fr","question":"Capitale?","context":"Paris est la capitale.","answers":["Paris"]}"#;
        let out = read_dataset(data.as_bytes(), TaskKind::Qa).unwrap();
        assert_eq!(out.len(), 1);
        assert!(matches!(&out[0].payload, Payload::Qa { answers, .. } if answers == &["Paris"]));
    }

    #[test]
    fn ner_length_mismatch() {
        let data = r#"{"id":"1","language":"en","tokens":["a","b","c","d"],"tags":["O","O","S-PER"]}"#;
        let err = read_dataset(data.as_bytes(), TaskKind::Ner).unwrap_err();
        assert!(matches!(err, CorpusError::LengthMismatch { index: 0, tokens: 4, tags: 3 }));
    }

    #[test]
    fn schema_error_names_field() {
        let data = "{\"id\":\"1\",\"language\":\"fr\",\"question\":\"q\",\"context\":\"c\",\"answers\":[\"x\"]}\n{\"id\":\"2\",\"language\":\"fr\",\"context\":\"c\",\"answers\":[\"x\"]}";
        match read_dataset(data.as_bytes(), TaskKind::Qa).unwrap_err() {
            CorpusError::Schema { index, field, .. } => {
                assert_eq!(index, 1);
                assert_eq!(field, "question");
            }
            e => panic!("{e}"),
        }
        let empty = r#"{"id":"1","language":"fr","question":"q","context":"c","answers":[]}"#;
        assert!(matches!(
            read_dataset(empty.as_bytes(), TaskKind::Qa).unwrap_err(),
            CorpusError::Schema { field, .. } if field == "answers"
        ));
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(read_dataset("".as_bytes(), TaskKind::Sum).unwrap().is_empty());
    }

    #[test]
    fn record_round_trip() {
        let inst = TaskInstance {
            id: "x".into(),
            language: "sw".into(),
            payload: Payload::Ner {
                tokens: vec!["John".into(), "Smith".into()],
                tags: vec!["B-PER".parse().unwrap(), "E-PER".parse().unwrap()],
            },
        };
        let back = parse_record(&inst.to_record(), TaskKind::Ner, 0).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let all: Vec<_> = (0..1000).map(|i| qa(i, "ctx")).collect();
        let p = SamplePolicy::new(250, 16000).unwrap();
        let a = sample(&all, &p, 7);
        assert_eq!(a.len(), 250);
        assert_eq!(a, sample(&all, &p, 7));
        assert_ne!(a, sample(&all, &p, 8));
        let few: Vec<_> = (0..100).map(|i| qa(i, "ctx")).collect();
        assert_eq!(sample(&few, &p, 1).len(), 100);
    }

    #[test]
    fn oversized_context_never_sampled() {
        let mut all: Vec<_> = (0..50).map(|i| qa(i, "short")).collect();
        all.push(qa(999, &"x".repeat(101)));
        let p = SamplePolicy::new(10, 100).unwrap();
        for seed in 0..50 {
            assert!(sample(&all, &p, seed).iter().all(|i| i.id != "999"));
        }
        let p = SamplePolicy::new(100, 100).unwrap();
        assert_eq!(sample(&all, &p, 0).len(), 50);
    }

    #[test]
    fn pool_split() {
        let all: Vec<_> = (0..10).map(|i| qa(i, "c")).collect();
        let (pool, eval) = split_examples_pool(&all, 1, 3).unwrap();
        assert_eq!((pool.len(), eval.len()), (1, 9));
        assert!(!eval.contains(&pool[0]));
        assert_eq!(split_examples_pool(&all, 1, 3).unwrap(), (pool, eval));
        assert!(split_examples_pool(&all, 10, 3).is_err());
    }

    #[test]
    fn iob_conversion() {
        let tags = iob_to_biose(&["B-PER", "I-PER", "O", "B-LOC", "B-DATE", "I-DATE", "I-ORG"]).unwrap();
        let s: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
        assert_eq!(s, ["B-PER", "E-PER", "O", "S-LOC", "O", "O", "S-ORG"]);
    }

    #[test]
    fn converts_squad() {
        let src = r#"{"data":[{"paragraphs":[{"context":"Berlin ist groß.","qas":[{"id":"q1","question":"Was?","answers":[{"text":"Berlin","answer_start":0},{"text":"Berlin","answer_start":0}]}]}]}]}"#;
        let out = convert(SourceFormat::Squad, src.as_bytes(), "de").unwrap();
        assert_eq!(out.len(), 1);
        assert!(matches!(&out[0].payload, Payload::Qa { answers, .. } if answers.len() == 1));
    }

    #[test]
    fn converts_wikiann_and_conll() {
        let wiki = r#"{"tokens":["Angela","Merkel","in","Berlin"],"ner_tags":[1,2,0,5]}"#;
        let out = convert(SourceFormat::Wikiann, wiki.as_bytes(), "de").unwrap();
        assert_eq!(out[0].gold_spans().unwrap().len(), 2);
        let conll = "Emeka B-PER\nlives O\nin O\nLagos B-LOC\n\nHi O\n";
        let out = convert(SourceFormat::Conll, conll.as_bytes(), "yor").unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].gold_spans().unwrap().len(), 2);
    }

    #[test]
    fn converts_xnli_and_xlsum() {
        let tsv = "language\tgold_label\tsentence1\tsentence2\tpairID\nde\tneutral\tA\tB\t1\nfr\tentailment\tC\tD\t2\n";
        let out = convert(SourceFormat::XnliTsv, tsv.as_bytes(), "de").unwrap();
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0].payload, Payload::Nli { label: NliLabel::Neutral, .. }));
        let jsonl = r#"{"premise":"a","hypothesis":"b","label":2}"#;
        let out = convert(SourceFormat::XnliJsonl, jsonl.as_bytes(), "es").unwrap();
        assert!(matches!(out[0].payload, Payload::Nli { label: NliLabel::Contradiction, .. }));
        let xl = r#"{"id":"n1","text":"Long text.","summary":"Short."}"#;
        let out = convert(SourceFormat::Xlsum, xl.as_bytes(), "pt").unwrap();
        assert_eq!(out[0].id, "n1");
    }
}
