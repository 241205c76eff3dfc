//! Rule-based normalization of raw model output, NER answer parsing and
//! BIOSE projection, output-language checks, and error classification.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::biose::{self, BioseTag, EntitySpan, EntityType};
use crate::config_space::{LanguageRegistry, TaskKind};
use crate::corpus::NliLabel;

const NLI_LEXICON: &str = include_str!("../data/nli_labels.tsv");
const SUMMARY_PREFIXES: &str = include_str!("../data/summary_prefixes.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    None,
    FormatInconsistency,
    ExtraneousInformation,
    UnwarrantedRefusal,
    WrongLanguage,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 5] = [
        ErrorClass::None,
        ErrorClass::FormatInconsistency,
        ErrorClass::ExtraneousInformation,
        ErrorClass::UnwarrantedRefusal,
        ErrorClass::WrongLanguage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::None => "none",
            ErrorClass::FormatInconsistency => "format_inconsistency",
            ErrorClass::ExtraneousInformation => "extraneous_information",
            ErrorClass::UnwarrantedRefusal => "unwarranted_refusal",
            ErrorClass::WrongLanguage => "wrong_language",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum OutputValue {
    Qa { answer_text: String },
    Ner { entities: Vec<(EntityType, String)> },
    Nli { label: Option<NliLabel> },
    Sum { summary_text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedOutput {
    pub task: TaskKind,
    pub value: OutputValue,
    pub output_language_ok: Option<bool>,
    pub error_class: ErrorClass,
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    c.is_ascii_punctuation()
        || matches!(
            get_general_category(c),
            ConnectorPunctuation
                | DashPunctuation
                | OpenPunctuation
                | ClosePunctuation
                | InitialPunctuation
                | FinalPunctuation
                | OtherPunctuation
        )
}

/// SQuAD-style answer normalization: lowercase, drop punctuation (which also
/// removes list and quote wrappers), drop the English articles when
/// `strip_articles`, collapse whitespace.
pub fn normalize_answer(raw: &str, strip_articles: bool) -> String {
    let lowered = raw.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !is_punctuation(*c)).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !(strip_articles && matches!(*w, "a" | "an" | "the")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalization for English gold answers.
pub fn normalize_qa(raw: &str) -> String {
    normalize_answer(raw, true)
}

/// Normalization against a gold answer in `gold_lang`; articles are only
/// stripped for English.
pub fn normalize_qa_for(raw: &str, gold_lang: &str) -> String {
    normalize_answer(raw, gold_lang == "en")
}

const REFUSAL_MARKERS: &[&str] = &[
    "i'm sorry",
    "i am sorry",
    "i apologize",
    "i cannot",
    "i can't",
    "i'm unable",
    "i am unable",
    "unable to answer",
    "unable to determine",
    "cannot be determined",
    "cannot answer",
    "can't answer",
    "not mentioned in the",
    "does not mention",
    "doesn't mention",
    "no information",
    "not provided in the",
    "does not provide",
    "doesn't provide",
    "as an ai",
    "no answer",
];

pub fn is_refusal(text: &str) -> bool {
    let lower = text.to_lowercase();
    REFUSAL_MARKERS.iter().any(|m| lower.contains(m))
}

fn answer_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:<\s*answer\s*>|answer|the answer is|réponse|respuesta|antwort)\s*[:：]\s*").unwrap())
}

/// QA output: refusal detection, prefix and wrapper classification, then
/// answer normalization for the gold language.
pub fn postprocess_qa(raw: &str, gold_lang: &str) -> NormalizedOutput {
    let trimmed = raw.trim();
    let mut error = ErrorClass::None;
    let mut body = trimmed;
    if let Some(m) = answer_prefix().find(body) {
        body = &body[m.end()..];
        error = ErrorClass::ExtraneousInformation;
    }
    let wrapped = ["[]", "()", "\"\"", "''", "“”", "«»", "「」"]
        .iter()
        .any(|w| {
            let mut cs = w.chars();
            let (o, c) = (cs.next().unwrap(), cs.next().unwrap());
            body.len() > 1 && body.starts_with(o) && body.ends_with(c)
        });
    if wrapped && error == ErrorClass::None {
        error = ErrorClass::FormatInconsistency;
    }
    let answer_text = if is_refusal(body) {
        error = ErrorClass::UnwarrantedRefusal;
        String::new()
    } else {
        normalize_qa_for(body, gold_lang)
    };
    NormalizedOutput {
        task: TaskKind::Qa,
        value: OutputValue::Qa { answer_text },
        output_language_ok: None,
        error_class: error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerParse {
    pub entities: Vec<(EntityType, String)>,
    pub error_class: ErrorClass,
}

fn tuple_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"\(\s*['"]?(?i:(PER|ORG|LOC|PERSON|ORGANIZATION|LOCATION))['"]?\s*,\s*(?:'([^']*)'|"([^"]*)"|([^()'"]*?))\s*\)"#,
        )
        .unwrap()
    })
}

fn colon_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"\b(PER|ORG|LOC)\s*[:：]\s*([^\[\]\n,'"()]+)"#).unwrap())
}

fn ner_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:ner\s*tags?|entities|output|answer|<\s*answer\s*>)\s*[:：]\s*").unwrap())
}

/// Index of the bracket closing the `[` at `open`, if any.
fn matching_bracket(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    for (i, c) in text[open..].char_indices() {
        match (c, quote) {
            ('\'' | '"', None) => quote = Some(c),
            (q, Some(open_q)) if q == open_q => quote = None,
            (_, Some(_)) => {}
            ('[', None) => depth += 1,
            (']', None) => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Tolerant parser for `[(Tag, Entity), ...]` answers and the common
/// deviations (colon-style items, one item per line, label prefixes,
/// trailing remarks). Never fails.
pub fn parse_ner(raw: &str) -> NerParse {
    let mut text = raw.trim();
    let mut error = ErrorClass::None;
    if let Some(m) = ner_prefix_re().find(text) {
        text = &text[m.end()..];
        error = ErrorClass::ExtraneousInformation;
    }
    let tuples: Vec<(EntityType, String)> = tuple_re()
        .captures_iter(text)
        .filter_map(|c| {
            let ty = c.get(1)?.as_str().parse::<EntityType>().ok()?;
            let surface = c.get(2).or(c.get(3)).or(c.get(4))?.as_str().trim().to_string();
            (!surface.is_empty()).then_some((ty, surface))
        })
        .collect();

    let list = text.find('[').and_then(|open| matching_bracket(text, open).map(|close| (open, close)));
    if !tuples.is_empty() || list.is_some_and(|(o, c)| text[o + 1..c].trim().is_empty()) {
        if let Some((open, close)) = list {
            let outside = format!("{}{}", &text[..open], &text[close + 1..]);
            let inner = tuple_re().replace_all(&text[open + 1..close], "");
            let leftover = inner.chars().any(|c| !(c.is_whitespace() || c == ','));
            if leftover {
                error = ErrorClass::FormatInconsistency;
            } else if !outside.trim().is_empty() && error == ErrorClass::None {
                error = ErrorClass::ExtraneousInformation;
            }
        } else if error == ErrorClass::None {
            error = ErrorClass::FormatInconsistency;
        }
        return NerParse {
            entities: tuples,
            error_class: error,
        };
    }

    let colon: Vec<(EntityType, String)> = colon_re()
        .captures_iter(text)
        .filter_map(|c| {
            let ty = c[1].parse::<EntityType>().ok()?;
            let surface = c[2].trim().to_string();
            (!surface.is_empty()).then_some((ty, surface))
        })
        .collect();
    if !colon.is_empty() {
        return NerParse {
            entities: colon,
            error_class: ErrorClass::FormatInconsistency,
        };
    }
    let error_class = if text.is_empty() {
        error
    } else if is_refusal(text) {
        ErrorClass::UnwarrantedRefusal
    } else {
        ErrorClass::FormatInconsistency
    };
    NerParse {
        entities: Vec::new(),
        error_class,
    }
}

fn is_latin_word(s: &str) -> bool {
    s.chars()
        .filter(|c| c.is_alphabetic())
        .all(|c| (c as u32) < 0x0250 || (0x1E00..=0x1EFF).contains(&(c as u32)))
}

fn token_eq(a: &str, b: &str) -> bool {
    a == b || (is_latin_word(a) && is_latin_word(b) && a.to_lowercase() == b.to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub tags: Vec<BioseTag>,
    pub dropped: usize,
}

/// Places each predicted entity at its first unconsumed exact match in the
/// token sequence (case-insensitive for Latin script) and encodes BIOSE.
/// Entities that cannot be placed are dropped and counted.
pub fn project_biose<S: AsRef<str>>(tokens: &[S], entities: &[(EntityType, String)]) -> Projection {
    let tokens: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
    let mut consumed = vec![false; tokens.len()];
    let mut spans = Vec::new();
    let mut dropped = 0;
    for (ty, surface) in entities {
        let words: Vec<&str> = surface.split_whitespace().collect();
        let m = words.len();
        let found = (m > 0 && m <= tokens.len())
            .then(|| {
                (0..=tokens.len() - m).find(|&i| {
                    (i..i + m).all(|j| !consumed[j]) && words.iter().zip(&tokens[i..i + m]).all(|(w, t)| token_eq(w, t))
                })
            })
            .flatten();
        match found {
            Some(i) => {
                consumed[i..i + m].iter_mut().for_each(|c| *c = true);
                spans.push(EntitySpan::new(*ty, i, i + m - 1));
            }
            None => dropped += 1,
        }
    }
    let tags = biose::spans_to_tags(&spans, tokens.len()).expect("placed spans are disjoint and in range");
    Projection { tags, dropped }
}

/// Multilingual NLI label words.
#[derive(Debug, Clone)]
pub struct LabelLexicon {
    /// (language, lowercased variant, label)
    entries: Vec<(String, String, NliLabel)>,
}

impl LabelLexicon {
    pub fn bundled() -> &'static LabelLexicon {
        static L: OnceLock<LabelLexicon> = OnceLock::new();
        L.get_or_init(|| Self::parse(NLI_LEXICON).expect("bundled lexicon is valid"))
    }

    /// Tab-separated `language, variant, canonical` lines; `#` comments.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(format!("line {}: expected 3 tab-separated columns", i + 1));
            }
            let label = cols[2].parse::<NliLabel>().map_err(|e| format!("line {}: {e}", i + 1))?;
            entries.push((cols[0].to_string(), cols[1].trim().to_lowercase(), label));
        }
        Ok(LabelLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
    }
}

fn unspaced_script(c: char) -> bool {
    let c = c as u32;
    (0x0E00..=0x0E7F).contains(&c) || (0x3040..=0x30FF).contains(&c) || (0x4E00..=0x9FFF).contains(&c)
}

/// Byte offsets of whole-word occurrences of `needle` in `hay`.
fn word_occurrences(hay: &str, needle: &str) -> Vec<usize> {
    let unspaced = needle.chars().next().is_some_and(unspaced_script);
    hay.match_indices(needle)
        .map(|(i, _)| i)
        .filter(|&i| {
            unspaced || {
                let before = hay[..i].chars().next_back();
                let after = hay[i + needle.len()..].chars().next();
                !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
            }
        })
        .collect()
}

/// Picks the first label word in the output. English label words are scored
/// as-is; a lexicon variant maps to its label but marks `WrongLanguage`.
/// Surrounding prose marks `ExtraneousInformation`.
pub fn normalize_nli(raw: &str, lexicon: &LabelLexicon) -> (Option<NliLabel>, ErrorClass) {
    let lower = raw.to_lowercase();
    // (offset, english?, length, label)
    let mut best: Option<(usize, bool, usize, NliLabel)> = None;
    let mut consider = |pos: usize, english: bool, len: usize, label: NliLabel| {
        let better = match best {
            None => true,
            Some((p, e, l, _)) => (pos, !english, std::cmp::Reverse(len)) < (p, !e, std::cmp::Reverse(l)),
        };
        if better {
            best = Some((pos, english, len, label));
        }
    };
    for label in NliLabel::ALL {
        for pos in word_occurrences(&lower, label.as_str()) {
            consider(pos, true, label.as_str().len(), label);
        }
    }
    for (_, variant, label) in &lexicon.entries {
        if NliLabel::ALL.iter().any(|l| l.as_str() == variant) {
            continue;
        }
        for pos in word_occurrences(&lower, variant) {
            consider(pos, false, variant.len(), *label);
        }
    }
    match best {
        None => (None, ErrorClass::FormatInconsistency),
        Some((pos, english, len, label)) => {
            if !english {
                return (Some(label), ErrorClass::WrongLanguage);
            }
            let rest = format!("{}{}", &lower[..pos], &lower[pos + len..]);
            let extra = rest.chars().any(|c| !(c.is_whitespace() || is_punctuation(c)));
            (Some(label), if extra { ErrorClass::ExtraneousInformation } else { ErrorClass::None })
        }
    }
}

/// Leading summary prefixes such as `Summary:` in many languages.
#[derive(Debug, Clone)]
pub struct PrefixLexicon {
    /// Lowercased, longest first.
    prefixes: Vec<String>,
}

impl PrefixLexicon {
    pub fn bundled() -> &'static PrefixLexicon {
        static L: OnceLock<PrefixLexicon> = OnceLock::new();
        L.get_or_init(|| Self::parse(SUMMARY_PREFIXES))
    }

    /// Tab-separated `language, variant, canonical` lines; only the variant is used.
    pub fn parse(text: &str) -> Self {
        let mut prefixes: Vec<String> = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split('\t').nth(1))
            .map(|v| v.trim().to_lowercase())
            .filter(|v| !v.is_empty())
            .collect();
        prefixes.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        prefixes.dedup();
        PrefixLexicon { prefixes }
    }

    pub fn from_list<S: AsRef<str>>(items: &[S]) -> Self {
        let text: String = items.iter().map(|s| format!("x\t{}\tsummary\n", s.as_ref())).collect();
        Self::parse(&text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        Ok(Self::parse(&std::fs::read_to_string(path).map_err(|e| e.to_string())?))
    }
}

/// Strips leading `<prefix>:` labels (repeatedly) and surrounding whitespace.
/// Returns the text and whether anything was stripped.
pub fn strip_summary_prefix(raw: &str, lexicon: &PrefixLexicon) -> (String, bool) {
    let mut text = raw.trim();
    let mut stripped = false;
    'outer: loop {
        let body = text.trim_start_matches(['*', '#', ' ']);
        let lower = body.to_lowercase();
        for p in &lexicon.prefixes {
            // Lowercasing can change byte lengths; only accept prefixes whose
            // lowercase form maps onto the same byte range.
            if lower.starts_with(p.as_str()) && body.is_char_boundary(p.len()) && body[..p.len()].to_lowercase() == *p {
                let after = body[p.len()..].trim_start_matches(['*', ' ']);
                if let Some(rest) = after.strip_prefix(':').or_else(|| after.strip_prefix('：')) {
                    text = rest.trim_start_matches(['*', ' ']).trim();
                    stripped = true;
                    continue 'outer;
                }
            }
        }
        break;
    }
    (text.to_string(), stripped)
}

pub fn normalize_sum(raw: &str, lexicon: &PrefixLexicon) -> String {
    strip_summary_prefix(raw, lexicon).0
}

/// Outcome of an output-language check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LangCheck {
    Match,
    Mismatch,
    /// Nothing to judge (e.g. empty output).
    Indeterminate,
}

impl LangCheck {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            LangCheck::Match => Some(true),
            LangCheck::Mismatch => Some(false),
            LangCheck::Indeterminate => None,
        }
    }
}

pub trait LanguageDetector: Send + Sync {
    fn check(&self, text: &str, expected_lang: &str) -> LangCheck;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Script {
    Latin,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
    Bengali,
    Malayalam,
    Telugu,
    Thai,
    Han,
    Kana,
    Hangul,
}

pub fn script_of(c: char) -> Option<Script> {
    if !c.is_alphabetic() {
        return None;
    }
    let u = c as u32;
    Some(match u {
        0x0041..=0x024F | 0x1E00..=0x1EFF => Script::Latin,
        0x0370..=0x03FF | 0x1F00..=0x1FFF => Script::Greek,
        0x0400..=0x052F => Script::Cyrillic,
        0x0590..=0x05FF => Script::Hebrew,
        0x0600..=0x06FF | 0x0750..=0x077F | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF => Script::Arabic,
        0x0900..=0x097F => Script::Devanagari,
        0x0980..=0x09FF => Script::Bengali,
        0x0C00..=0x0C7F => Script::Telugu,
        0x0D00..=0x0D7F => Script::Malayalam,
        0x0E00..=0x0E7F => Script::Thai,
        0x3040..=0x30FF | 0x31F0..=0x31FF => Script::Kana,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF => Script::Han,
        0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF => Script::Hangul,
        _ => return None,
    })
}

/// Script-majority heuristic: the output matches when letters from the
/// expected language's script(s) are a strict majority of all letters.
pub struct ScriptDetector {
    scripts: HashMap<String, Vec<Script>>,
}

impl ScriptDetector {
    pub fn from_registry(registry: &LanguageRegistry) -> Self {
        let mut scripts = HashMap::new();
        for lang in registry.iter() {
            let s = match lang.script.as_str() {
                "Latin" => vec![Script::Latin],
                "Cyrillic" if lang.code == "sr" => vec![Script::Cyrillic, Script::Latin],
                "Cyrillic" => vec![Script::Cyrillic],
                "Greek" => vec![Script::Greek],
                "Arabic" => vec![Script::Arabic],
                "Hebrew" => vec![Script::Hebrew],
                "Devanagari" => vec![Script::Devanagari],
                "Bengali" => vec![Script::Bengali],
                "Malayalam" => vec![Script::Malayalam],
                "Telugu" => vec![Script::Telugu],
                "Thai" => vec![Script::Thai],
                "Han" => vec![Script::Han],
                "Japanese" => vec![Script::Kana, Script::Han],
                "Hangul" => vec![Script::Hangul, Script::Han],
                _ => continue,
            };
            scripts.insert(lang.code.clone(), s);
        }
        ScriptDetector { scripts }
    }

    pub fn bundled() -> &'static ScriptDetector {
        static D: OnceLock<ScriptDetector> = OnceLock::new();
        D.get_or_init(|| Self::from_registry(&LanguageRegistry::bundled()))
    }
}

impl LanguageDetector for ScriptDetector {
    fn check(&self, text: &str, expected_lang: &str) -> LangCheck {
        let Some(expected) = self.scripts.get(expected_lang) else {
            return LangCheck::Indeterminate;
        };
        let (mut hits, mut total) = (0usize, 0usize);
        for s in text.chars().filter_map(script_of) {
            total += 1;
            if expected.contains(&s) {
                hits += 1;
            }
        }
        if total == 0 {
            LangCheck::Indeterminate
        } else if hits * 2 > total {
            LangCheck::Match
        } else {
            LangCheck::Mismatch
        }
    }
}

pub fn check_output_language(text: &str, expected_lang: &str, detector: &dyn LanguageDetector) -> LangCheck {
    detector.check(text, expected_lang)
}
