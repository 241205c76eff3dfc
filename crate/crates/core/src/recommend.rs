//! Configuration recommendations per (task, resource level, model family),
//! from the bundled rule table or from rules mined over result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{resource_level, MinedRules, Rule, RuleProfile};
use crate::config_space::{
    Component, ComponentLang, ConfigError, Configuration, ExamplesMode, LanguageRegistry, ResourceClass, TaskKind,
};

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("unknown language {0:?}; add it to the language registry with an explicit resource class")]
    UnknownLanguage(String),
    #[error("no recommendation row for {task}/{level}/{model}; available: {}", available.join(", "))]
    MissingRow {
        task: TaskKind,
        level: ResourceLevel,
        model: String,
        available: Vec<String>,
    },
    #[error("rule table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceLevel {
    High,
    Low,
}

impl ResourceLevel {
    pub fn of(class: ResourceClass) -> Self {
        match resource_level(class) {
            "high" => ResourceLevel::High,
            _ => ResourceLevel::Low,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceLevel::High => "high",
            ResourceLevel::Low => "low",
        }
    }
}

impl fmt::Display for ResourceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResourceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" | "h" => Ok(ResourceLevel::High),
            "low" | "l" => Ok(ResourceLevel::Low),
            other => Err(format!("unknown resource level {other:?}")),
        }
    }
}

/// Per-component choice in a rule-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    S,
    E,
    /// No preference between English and source.
    N,
    /// Zero-shot; examples slot only.
    Z,
}

impl Choice {
    pub fn letter(self) -> char {
        match self {
            Choice::S => 'S',
            Choice::E => 'E',
            Choice::N => 'N',
            Choice::Z => 'Z',
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(Choice::S),
            "E" => Ok(Choice::E),
            "N" => Ok(Choice::N),
            "Z" => Ok(Choice::Z),
            other => Err(format!("unknown choice {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BundledPaperTable,
    MinedFromResults,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub task: TaskKind,
    pub resource_level: ResourceLevel,
    pub model_family: String,
    pub instruction: Choice,
    pub context: Choice,
    pub examples: Choice,
    /// Absent for NLI.
    pub output: Option<Choice>,
    pub provenance: Provenance,
}

impl RecommendationRow {
    pub fn validate(&self) -> Result<(), String> {
        for (name, c) in [("instruction", self.instruction), ("context", self.context)] {
            if c == Choice::Z {
                return Err(format!("Z is only allowed in the examples slot, found in {name}"));
            }
        }
        match (self.task, self.output) {
            (TaskKind::Nli, Some(_)) => Err("NLI rows have no output slot".into()),
            (TaskKind::Nli, None) => Ok(()),
            (_, None) => Err("missing output choice".into()),
            (_, Some(Choice::Z)) => Err("Z is only allowed in the examples slot, found in output".into()),
            _ => Ok(()),
        }
    }

    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.task, self.resource_level, self.model_family)
    }

    /// Four letters (three for NLI) in instruction, context, examples, output order.
    pub fn pattern(&self) -> String {
        let mut s: String = [self.instruction, self.context, self.examples].iter().map(|c| c.letter()).collect();
        if let Some(o) = self.output {
            s.push(o.letter());
        }
        s
    }
}

/// Normalizes a model name to its family (`gpt-3.5-turbo` → `gpt`).
pub fn model_family(name: &str) -> String {
    let lower = name.trim().to_ascii_lowercase();
    for (prefix, family) in [
        ("gpt", "gpt"),
        ("gemini", "gemini"),
        ("mixtral", "mixtral"),
        ("mistral", "mixtral"),
        ("bloom", "bloomz"),
    ] {
        if lower.starts_with(prefix) {
            return family.to_string();
        }
    }
    lower
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    rows: Vec<RecommendationRow>,
}

const BUNDLED_TABLE: &str = include_str!("../data/table4_recommendations.csv");

impl RuleTable {
    pub fn new(rows: Vec<RecommendationRow>) -> Result<Self, RecommendError> {
        let mut table = RuleTable::default();
        for (i, row) in rows.into_iter().enumerate() {
            row.validate().map_err(|message| RecommendError::Parse { line: i + 1, message })?;
            table.upsert(row);
        }
        Ok(table)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE, Provenance::BundledPaperTable).expect("bundled rule table is valid")
    }

    /// CSV with header `task,resource_level,model_family,instruction,context,examples,output`;
    /// `#` lines are comments and NLI rows leave `output` empty.
    pub fn parse(text: &str, provenance: Provenance) -> Result<Self, RecommendError> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.starts_with("task,") {
                    continue;
                }
            }
            let err = |message: String| RecommendError::Parse { line: line_no, message };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 7 {
                return Err(err(format!("expected 7 columns, found {}", cols.len())));
            }
            let task: TaskKind = cols[0].parse().map_err(|e: ConfigError| err(e.to_string()))?;
            let output = if cols[6].is_empty() { None } else { Some(Choice::parse(cols[6]).map_err(err)?) };
            let row = RecommendationRow {
                task,
                resource_level: cols[1].parse().map_err(err)?,
                model_family: model_family(cols[2]),
                instruction: Choice::parse(cols[3]).map_err(err)?,
                context: Choice::parse(cols[4]).map_err(err)?,
                examples: Choice::parse(cols[5]).map_err(err)?,
                output,
                provenance,
            };
            row.validate().map_err(err)?;
            rows.push(row);
        }
        Ok(RuleTable { rows })
    }

    pub fn load(path: &Path, provenance: Provenance) -> Result<Self, RecommendError> {
        let text = std::fs::read_to_string(path).map_err(|e| RecommendError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, provenance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,resource_level,model_family,instruction,context,examples,output\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.task,
                r.resource_level,
                r.model_family,
                r.instruction.letter(),
                r.context.letter(),
                r.examples.letter(),
                r.output.map(|c| c.letter().to_string()).unwrap_or_default()
            ));
        }
        out
    }

    pub fn rows(&self) -> &[RecommendationRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts or replaces the row with the same key.
    pub fn upsert(&mut self, row: RecommendationRow) {
        match self.rows.iter_mut().find(|r| r.key() == row.key()) {
            Some(existing) => *existing = row,
            None => self.rows.push(row),
        }
    }

    /// `overrides` rows replace this table's rows with the same key.
    pub fn layered(&self, overrides: &RuleTable) -> RuleTable {
        let mut out = self.clone();
        for row in &overrides.rows {
            out.upsert(row.clone());
        }
        out
    }

    pub fn find(&self, task: TaskKind, level: ResourceLevel, model: &str) -> Option<&RecommendationRow> {
        let family = model_family(model);
        self.rows
            .iter()
            .find(|r| r.task == task && r.resource_level == level && r.model_family == family)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub config: Configuration,
    pub provenance: Provenance,
    pub resolved_neutrals: Vec<Component>,
    pub resource_class: ResourceClass,
    pub resource_level: ResourceLevel,
    pub row: RecommendationRow,
}

fn resolve(choice: Choice, component: Component, neutrals: &mut Vec<Component>) -> ComponentLang {
    match choice {
        Choice::E => ComponentLang::English,
        Choice::N => {
            neutrals.push(component);
            ComponentLang::Source
        }
        Choice::S | Choice::Z => ComponentLang::Source,
    }
}

/// Turns a row into a concrete configuration: N becomes Source (recorded in
/// the returned list) and Z in the examples slot becomes zero-shot.
pub fn resolve_row(row: &RecommendationRow) -> Result<(Configuration, Vec<Component>), RecommendError> {
    let mut neutrals = Vec::new();
    let instruction = resolve(row.instruction, Component::Instruction, &mut neutrals);
    let context = resolve(row.context, Component::Context, &mut neutrals);
    let examples = match row.examples {
        Choice::Z => ExamplesMode::None,
        Choice::E => ExamplesMode::English,
        Choice::S => ExamplesMode::Source,
        Choice::N => {
            neutrals.push(Component::Examples);
            ExamplesMode::Source
        }
    };
    let config = match row.task {
        TaskKind::Nli => Configuration::nli(instruction, context, examples),
        task => {
            let output = resolve(row.output.unwrap_or(Choice::N), Component::Output, &mut neutrals);
            Configuration::new(task, instruction, context, examples, output)?
        }
    };
    Ok((config, neutrals))
}

pub fn recommend_for_class(
    task: TaskKind,
    class: ResourceClass,
    model: &str,
    table: &RuleTable,
) -> Result<Recommendation, RecommendError> {
    let level = ResourceLevel::of(class);
    let row = table.find(task, level, model).ok_or_else(|| RecommendError::MissingRow {
        task,
        level,
        model: model_family(model),
        available: table.rows.iter().map(RecommendationRow::key).collect(),
    })?;
    let (config, resolved_neutrals) = resolve_row(row)?;
    Ok(Recommendation {
        config,
        provenance: row.provenance,
        resolved_neutrals,
        resource_class: class,
        resource_level: level,
        row: row.clone(),
    })
}

/// Looks up the language's class, buckets it (A/B high, C/D low) and
/// resolves the matching row.
pub fn recommend(
    task: TaskKind,
    language: &str,
    model: &str,
    registry: &LanguageRegistry,
    table: &RuleTable,
) -> Result<Recommendation, RecommendError> {
    let info = registry
        .get(language)
        .ok_or_else(|| RecommendError::UnknownLanguage(language.to_string()))?;
    recommend_for_class(task, info.resource_class, model, table)
}

fn attr_value(item: &str) -> Option<(&str, &str)> {
    item.split_once('=')
}

fn bucket_compatible(rule: &Rule, level: ResourceLevel) -> bool {
    rule.antecedent.iter().filter_map(|i| attr_value(i)).all(|(attr, value)| match attr {
        "resource" => value == level.as_str(),
        "class" => value
            .parse::<ResourceClass>()
            .map_or(false, |c| ResourceLevel::of(c) == level),
        _ => true,
    })
}

fn component_choice(rule: &Rule, component: Component) -> Choice {
    let prefix = format!("{}=", component.as_str());
    rule.antecedent
        .iter()
        .find_map(|i| i.strip_prefix(&prefix))
        .and_then(|v| Choice::parse(v).ok())
        .unwrap_or(Choice::N)
}

/// Best rule per (task, resource level, model): consequent exactly
/// `score_bin=high`, admitted by the profile, at least one component item in
/// the antecedent and no resource item contradicting the level. Highest
/// confidence wins, then the larger antecedent, then item order. Components
/// the winning rule leaves out become N.
pub fn derive_rows_from_rules(mined: &[MinedRules], profile: &RuleProfile) -> Vec<RecommendationRow> {
    let target: BTreeSet<String> = BTreeSet::from(["score_bin=high".to_string()]);
    let component_attrs: Vec<&str> = Component::ALL.iter().map(|c| c.as_str()).collect();
    let mut rows = Vec::new();
    let mut by_key: BTreeMap<(TaskKind, String), Vec<&Rule>> = BTreeMap::new();
    for m in mined {
        by_key.entry((m.task, model_family(&m.model))).or_default().extend(m.rules.iter());
    }
    for ((task, model), rules) in by_key {
        for level in [ResourceLevel::High, ResourceLevel::Low] {
            let best = rules
                .iter()
                .filter(|r| r.consequent == target && profile.admits(r))
                .filter(|r| {
                    r.antecedent
                        .iter()
                        .filter_map(|i| attr_value(i))
                        .any(|(a, _)| component_attrs.contains(&a))
                })
                .filter(|r| bucket_compatible(r, level))
                .max_by(|a, b| {
                    a.confidence
                        .total_cmp(&b.confidence)
                        .then(a.antecedent.len().cmp(&b.antecedent.len()))
                        .then_with(|| b.antecedent.cmp(&a.antecedent))
                });
            let Some(rule) = best else { continue };
            rows.push(RecommendationRow {
                task,
                resource_level: level,
                model_family: model.clone(),
                instruction: component_choice(rule, Component::Instruction),
                context: component_choice(rule, Component::Context),
                examples: component_choice(rule, Component::Examples),
                output: (task != TaskKind::Nli).then(|| component_choice(rule, Component::Output)),
                provenance: Provenance::MinedFromResults,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(ante: &[&str], cons: &[&str], support: f64, confidence: f64) -> Rule {
        Rule {
            antecedent: ante.iter().map(|s| s.to_string()).collect(),
            consequent: cons.iter().map(|s| s.to_string()).collect(),
            support,
            confidence,
        }
    }

    #[test]
    fn bundled_rows_load() {
        let t = RuleTable::bundled();
        assert_eq!(t.len(), 32);
        let csv = t.to_csv();
        assert_eq!(RuleTable::parse(&csv, Provenance::BundledPaperTable).unwrap(), t);
    }

    #[test]
    fn qa_low_gpt() {
        let reg = LanguageRegistry::bundled();
        let rec = recommend(TaskKind::Qa, "ml", "gpt", &reg, &RuleTable::bundled()).unwrap();
        assert_eq!(rec.config.code(), "SSSS");
        assert_eq!(rec.resolved_neutrals, vec![Component::Instruction]);
        assert_eq!(rec.resource_level, ResourceLevel::Low);
    }

    #[test]
    fn ner_high_gpt() {
        let reg = LanguageRegistry::bundled();
        let rec = recommend(TaskKind::Ner, "sr", "gpt-3.5-turbo", &reg, &RuleTable::bundled()).unwrap();
        assert_eq!(rec.config.code(), "SSSS");
        assert_eq!(rec.resolved_neutrals, vec![Component::Instruction]);
        assert_eq!(rec.resource_level, ResourceLevel::High);
    }

    #[test]
    fn errors() {
        let reg = LanguageRegistry::bundled();
        assert!(matches!(
            recommend(TaskKind::Qa, "xx", "gpt", &reg, &RuleTable::bundled()),
            Err(RecommendError::UnknownLanguage(_))
        ));
        assert!(matches!(
            recommend(TaskKind::Qa, "de", "llama", &reg, &RuleTable::bundled()),
            Err(RecommendError::MissingRow { .. })
        ));
        assert!(RuleTable::parse("qa,high,gpt,Z,S,S,S", Provenance::MinedFromResults).is_err());
        assert!(RuleTable::parse("nli,high,gpt,S,S,S,S", Provenance::MinedFromResults).is_err());
    }

    #[test]
    fn derive_example() {
        let mined = vec![MinedRules {
            task: TaskKind::Qa,
            model: "gpt".into(),
            transactions: 100,
            rules: vec![
                rule(&["context=S", "examples=S"], &["score_bin=high"], 0.2, 0.9),
                rule(&["context=E"], &["score_bin=high"], 0.2, 0.8),
                rule(&["context=S"], &["score_bin=low"], 0.3, 0.95),
            ],
        }];
        let rows = derive_rows_from_rules(&mined, &RuleProfile::APPENDIX_B);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].pattern(), "NSSN");
        assert!(derive_rows_from_rules(&[], &RuleProfile::APPENDIX_B).is_empty());
    }

    #[test]
    fn derive_ties_prefer_larger_antecedent() {
        let mined = vec![MinedRules {
            task: TaskKind::Qa,
            model: "gpt".into(),
            transactions: 100,
            rules: vec![
                rule(&["context=S"], &["score_bin=high"], 0.2, 0.9),
                rule(&["context=S", "output=E"], &["score_bin=high"], 0.2, 0.9),
                rule(&["instruction=E", "resource=low"], &["score_bin=high"], 0.2, 0.95),
            ],
        }];
        let rows = derive_rows_from_rules(&mined, &RuleProfile::APPENDIX_B);
        let high = rows.iter().find(|r| r.resource_level == ResourceLevel::High).unwrap();
        let low = rows.iter().find(|r| r.resource_level == ResourceLevel::Low).unwrap();
        assert_eq!(high.pattern(), "NSNE");
        assert_eq!(low.pattern(), "ENNN");
    }
}
