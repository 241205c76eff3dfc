//! Result tables and their analyses: percentile binning, Apriori rule
//! mining, top configurations and relative improvements, per-component
//! performance gaps, component correlations, and the translation-quality
//! study.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_space::{
    enumerate_configurations, parse_config_code, Component, ComponentLang, ConfigError, Configuration, ExamplesMode,
    LanguageRegistry, ResourceClass, TaskKind,
};
use crate::metrics::{
    self, bleu_with, chrf, correlation_p_value, pearson_coefficient, point_biserial, rouge, CorrelationResult,
    MetricError, RougeVariant, TokenizerPolicy,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty input")]
    Empty,
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("duplicate result for {0}")]
    Duplicate(String),
    #[error("group {group} has {n} rows; binning needs at least 3")]
    SmallGroup { group: String, n: usize },
    #[error("missing configurations for {key}: {missing:?}")]
    MissingConfigs { key: String, missing: Vec<String> },
    #[error("no results for {0}")]
    NoResults(String),
    #[error("baseline {config} scores 0 for {key}; relative improvement undefined")]
    ZeroBaseline { key: String, config: String },
    #[error("no configuration pairs differ only in {0}")]
    NoPairs(Component),
    #[error("thresholds must lie in (0, 1]: support {support}, confidence {confidence}")]
    BadThreshold { support: f64, confidence: f64 },
    #[error("transaction {index} has two values for attribute {attribute}")]
    ConflictingItems { index: usize, attribute: String },
    #[error("no similarity value for language {0}")]
    MissingSimilarity(String),
    #[error("unknown profile {0:?} (expected appendixB or table4)")]
    UnknownProfile(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub language: String,
    pub config: Configuration,
    pub score: f64,
}

impl ResultRow {
    pub fn task(&self) -> TaskKind {
        self.config.task()
    }
}

/// Key of a result cell: (task, model, language, config code).
pub type CellKey = (TaskKind, String, String, String);

/// Scores per (configuration, language, model). Cells reported as not
/// available are tracked separately from scored rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
    unavailable: BTreeSet<CellKey>,
    #[serde(skip)]
    index: BTreeSet<CellKey>,
}

fn cell_key(row: &ResultRow) -> CellKey {
    (row.task(), row.model.clone(), row.language.clone(), row.config.code())
}

fn key_label(task: TaskKind, model: &str, language: &str) -> String {
    format!("{task}/{model}/{language}")
}

#[derive(Deserialize)]
struct RawRow {
    task: String,
    model: String,
    language: String,
    config_code: String,
    score: serde_json::Value,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn unavailable(&self) -> &BTreeSet<CellKey> {
        &self.unavailable
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: ResultRow) -> Result<(), AnalysisError> {
        if !row.score.is_finite() {
            return Err(AnalysisError::Row {
                row: self.rows.len(),
                message: format!("non-finite score {}", row.score),
            });
        }
        let key = cell_key(&row);
        if self.index.contains(&key) || self.unavailable.contains(&key) {
            return Err(AnalysisError::Duplicate(format!("{}/{}/{}/{}", key.0, key.1, key.2, key.3)));
        }
        self.index.insert(key);
        self.rows.push(row);
        Ok(())
    }

    pub fn mark_unavailable(&mut self, task: TaskKind, model: &str, language: &str, config: &Configuration) -> Result<(), AnalysisError> {
        let key = (task, model.to_string(), language.to_string(), config.code());
        if self.index.contains(&key) || !self.unavailable.insert(key.clone()) {
            return Err(AnalysisError::Duplicate(format!("{}/{}/{}/{}", key.0, key.1, key.2, key.3)));
        }
        Ok(())
    }

    pub fn get(&self, model: &str, language: &str, config: &Configuration) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.language == language && r.config == *config)
            .map(|r| r.score)
    }

    /// Rows matching the optional filters; unavailable markers are carried along.
    pub fn subset(&self, task: Option<TaskKind>, model: Option<&str>, language: Option<&str>) -> ResultTable {
        let keep = |t: TaskKind, m: &str, l: &str| {
            task.map_or(true, |x| x == t) && model.map_or(true, |x| x == m) && language.map_or(true, |x| x == l)
        };
        let mut out = ResultTable::new();
        for r in &self.rows {
            if keep(r.task(), &r.model, &r.language) {
                out.push(r.clone()).expect("subset of a valid table");
            }
        }
        out.unavailable = self
            .unavailable
            .iter()
            .filter(|k| keep(k.0, &k.1, &k.2))
            .cloned()
            .collect();
        out
    }

    /// Distinct (task, model, language) keys in first-seen order.
    pub fn keys(&self) -> Vec<(TaskKind, String, String)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.rows {
            let k = (r.task(), r.model.clone(), r.language.clone());
            if seen.insert(k.clone()) {
                out.push(k);
            }
        }
        out
    }

    fn add_raw(&mut self, idx: usize, raw: RawRow) -> Result<(), AnalysisError> {
        let row_err = |message: String| AnalysisError::Row { row: idx, message };
        let task: TaskKind = raw.task.parse().map_err(|e: ConfigError| row_err(e.to_string()))?;
        let config = parse_config_code(&raw.config_code, task).map_err(|e| row_err(e.to_string()))?;
        let score = match &raw.score {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) if s.trim().eq_ignore_ascii_case("na") || s.trim().is_empty() => None,
            serde_json::Value::String(s) => Some(s.trim().parse::<f64>().map_err(|e| row_err(format!("score {s:?}: {e}")))?),
            serde_json::Value::Null => None,
            other => return Err(row_err(format!("score {other}"))),
        };
        match score {
            Some(score) => self.push(ResultRow {
                model: raw.model,
                language: raw.language,
                config,
                score,
            }),
            None => self.mark_unavailable(task, &raw.model, &raw.language, &config),
        }
    }

    /// CSV with header `task,model,language,config_code,score`; `NA` or an
    /// empty score marks an unavailable cell.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = ResultTable::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| AnalysisError::Row {
                row: idx,
                message: e.to_string(),
            })?;
            let get = |i: usize| rec.get(i).unwrap_or("").to_string();
            let raw = RawRow {
                task: get(0),
                model: get(1),
                language: get(2),
                config_code: get(3),
                score: serde_json::Value::String(get(4)),
            };
            table.add_raw(idx, raw)?;
        }
        Ok(table)
    }

    /// One JSON object per line with the CSV's field names.
    pub fn read_jsonl<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut text = String::new();
        let mut reader = reader;
        reader.read_to_string(&mut text).map_err(|e| AnalysisError::Io {
            path: "<reader>".into(),
            message: e.to_string(),
        })?;
        let mut table = ResultTable::new();
        for (idx, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let raw: RawRow = serde_json::from_str(line).map_err(|e| AnalysisError::Row {
                row: idx,
                message: e.to_string(),
            })?;
            table.add_raw(idx, raw)?;
        }
        Ok(table)
    }

    /// Loads `.csv`, `.jsonl` or a directory of such files (merged).
    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let io = |e: std::io::Error| AnalysisError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        if path.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(path).map_err(io)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
            entries.sort();
            let mut merged = ResultTable::new();
            for p in entries.into_iter().filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "jsonl"))) {
                merged.merge(Self::load(&p)?)?;
            }
            return Ok(merged);
        }
        let file = std::fs::File::open(path).map_err(io)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => Self::read_jsonl(file),
            _ => Self::read_csv(file),
        }
    }

    pub fn merge(&mut self, other: ResultTable) -> Result<(), AnalysisError> {
        for row in other.rows {
            self.push(row)?;
        }
        for key in other.unavailable {
            if self.index.contains(&key) || !self.unavailable.insert(key.clone()) {
                return Err(AnalysisError::Duplicate(format!("{}/{}/{}/{}", key.0, key.1, key.2, key.3)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| AnalysisError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        };
        w.write_record(["task", "model", "language", "config_code", "score"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([r.task().as_str(), &r.model, &r.language, &r.config.code(), &r.score.to_string()])
                .map_err(err)?;
        }
        for k in &self.unavailable {
            w.write_record([k.0.as_str(), &k.1, &k.2, &k.3, "NA"]).map_err(err)?;
        }
        w.flush().map_err(|e| AnalysisError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        })
    }

    /// Bundled fixtures transcribed from published per-language result tables:
    /// `xquad`, `indicqa`, `wikiann`, `masakhaner`, `xlsum`, `xnli`.
    pub fn fixture(name: &str) -> Option<ResultTable> {
        let text = match name {
            "xquad" => include_str!("../fixtures/results/xquad.csv"),
            "indicqa" => include_str!("../fixtures/results/indicqa.csv"),
            "wikiann" => include_str!("../fixtures/results/wikiann.csv"),
            "masakhaner" => include_str!("../fixtures/results/masakhaner.csv"),
            "xlsum" => include_str!("../fixtures/results/xlsum.csv"),
            "xnli" => include_str!("../fixtures/results/xnli.csv"),
            _ => return None,
        };
        Some(Self::read_csv(text.as_bytes()).expect("bundled fixture is valid"))
    }

    pub const FIXTURES: [&'static str; 6] = ["xquad", "indicqa", "wikiann", "masakhaner", "xlsum", "xnli"];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreBin {
    Low,
    Medium,
    High,
}

impl ScoreBin {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreBin::Low => "low",
            ScoreBin::Medium => "medium",
            ScoreBin::High => "high",
        }
    }
}

/// Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value (1-based,
/// at least the first). Integer arithmetic keeps boundaries exact.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    let n = sorted.len();
    let rank = ((pct as usize * n).div_ceil(100)).max(1).min(n);
    sorted[rank - 1]
}

pub fn bin_value(score: f64, low: f64, high: f64) -> ScoreBin {
    if score < low {
        ScoreBin::Low
    } else if score < high {
        ScoreBin::Medium
    } else {
        ScoreBin::High
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedRow {
    pub row: ResultRow,
    pub bin: ScoreBin,
}

/// Bins each (task, model, language) score column at its nearest-rank
/// `low_pct` and `high_pct` percentiles: below the first is low, below the
/// second is medium, the rest high.
pub fn bin_scores(table: &ResultTable, low_pct: u32, high_pct: u32) -> Result<Vec<BinnedRow>, AnalysisError> {
    if table.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut groups: BTreeMap<(TaskKind, String, String), Vec<f64>> = BTreeMap::new();
    for r in table.rows() {
        groups.entry((r.task(), r.model.clone(), r.language.clone())).or_default().push(r.score);
    }
    let mut bounds = HashMap::new();
    for (key, mut scores) in groups {
        if scores.len() < 3 {
            return Err(AnalysisError::SmallGroup {
                group: key_label(key.0, &key.1, &key.2),
                n: scores.len(),
            });
        }
        scores.sort_by(f64::total_cmp);
        bounds.insert(key, (nearest_rank(&scores, low_pct), nearest_rank(&scores, high_pct)));
    }
    Ok(table
        .rows()
        .iter()
        .map(|r| {
            let (lo, hi) = bounds[&(r.task(), r.model.clone(), r.language.clone())];
            BinnedRow {
                row: r.clone(),
                bin: bin_value(r.score, lo, hi),
            }
        })
        .collect())
}

/// `attribute=value` items; at most one value per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transaction {
    pub items: BTreeSet<String>,
}

impl Transaction {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        Transaction {
            items: items.into_iter().map(Into::into).collect(),
        }
    }

    fn check(&self, index: usize) -> Result<(), AnalysisError> {
        let mut attrs = BTreeSet::new();
        for item in &self.items {
            let attr = item.split_once('=').map_or(item.as_str(), |(a, _)| a);
            if !attrs.insert(attr) {
                return Err(AnalysisError::ConflictingItems {
                    index,
                    attribute: attr.to_string(),
                });
            }
        }
        Ok(())
    }
}

pub fn component_item(component: Component, config: &Configuration) -> Option<String> {
    if config.task() == TaskKind::Nli && component == Component::Output {
        return None;
    }
    let letter = match component {
        Component::Examples => config.examples().letter(),
        other => config.component(other).map(ComponentLang::letter)?,
    };
    Some(format!("{}={letter}", component.as_str()))
}

pub fn resource_level(class: ResourceClass) -> &'static str {
    match class {
        ResourceClass::A | ResourceClass::B => "high",
        ResourceClass::C | ResourceClass::D => "low",
    }
}

/// One transaction per binned row: the component items, the language's
/// resource class and level (when known), and the score bin.
pub fn transactions(binned: &[BinnedRow], registry: &LanguageRegistry) -> Vec<Transaction> {
    binned
        .iter()
        .map(|b| {
            let mut items: Vec<String> = Component::ALL.iter().filter_map(|c| component_item(*c, &b.row.config)).collect();
            if let Some(lang) = registry.get(&b.row.language) {
                items.push(format!("class={}", lang.resource_class));
                items.push(format!("resource={}", resource_level(lang.resource_class)));
            }
            items.push(format!("score_bin={}", b.bin.as_str()));
            Transaction::new(items)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedent: BTreeSet<String>,
    pub consequent: BTreeSet<String>,
    pub support: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentItemset {
    pub items: BTreeSet<String>,
    pub count: usize,
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriResult {
    pub transactions: usize,
    pub itemsets: Vec<FrequentItemset>,
    pub rules: Vec<Rule>,
}

/// Frequent itemsets by level-wise candidate growth with downward-closure
/// pruning, then every rule X → Y (X, Y non-empty, disjoint, X ∪ Y frequent)
/// with support ≥ `min_support` and confidence ≥ `min_confidence`.
/// Support is σ(X ∪ Y)/N and confidence σ(X ∪ Y)/σ(X).
pub fn apriori(transactions: &[Transaction], min_support: f64, min_confidence: f64) -> Result<AprioriResult, AnalysisError> {
    if transactions.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let valid = |x: f64| x > 0.0 && x <= 1.0;
    if !valid(min_support) || !valid(min_confidence) {
        return Err(AnalysisError::BadThreshold {
            support: min_support,
            confidence: min_confidence,
        });
    }
    for (i, t) in transactions.iter().enumerate() {
        t.check(i)?;
    }
    let n = transactions.len();
    let vocab: Vec<&String> = transactions
        .iter()
        .flat_map(|t| t.items.iter())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id: HashMap<&String, usize> = vocab.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let encoded: Vec<Vec<usize>> = transactions
        .iter()
        .map(|t| t.items.iter().map(|s| id[s]).collect())
        .collect();
    let frequent = |count: usize| count as f64 / n as f64 >= min_support;

    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut level: Vec<Vec<usize>> = Vec::new();
    let mut singles = vec![0usize; vocab.len()];
    for t in &encoded {
        for &i in t {
            singles[i] += 1;
        }
    }
    for (i, &c) in singles.iter().enumerate() {
        if frequent(c) {
            counts.insert(vec![i], c);
            level.push(vec![i]);
        }
    }
    while !level.is_empty() {
        let prev: BTreeSet<&Vec<usize>> = level.iter().collect();
        let mut candidates = Vec::new();
        for (a_idx, a) in level.iter().enumerate() {
            for b in &level[a_idx + 1..] {
                let k = a.len();
                if a[..k - 1] != b[..k - 1] {
                    continue;
                }
                let mut c = a.clone();
                c.push(b[k - 1]);
                c.sort_unstable();
                let closed = (0..c.len()).all(|skip| {
                    let sub: Vec<usize> = c.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                    prev.contains(&sub)
                });
                if closed {
                    candidates.push(c);
                }
            }
        }
        candidates.sort();
        candidates.dedup();
        let mut next = Vec::new();
        for c in candidates {
            let count = encoded.iter().filter(|t| c.iter().all(|i| t.binary_search(i).is_ok())).count();
            if frequent(count) {
                counts.insert(c.clone(), count);
                next.push(c);
            }
        }
        next.sort();
        level = next;
    }

    let names = |ids: &[usize]| -> BTreeSet<String> { ids.iter().map(|i| vocab[*i].clone()).collect() };
    let mut itemsets: Vec<FrequentItemset> = counts
        .iter()
        .map(|(ids, &count)| FrequentItemset {
            items: names(ids),
            count,
            support: count as f64 / n as f64,
        })
        .collect();
    itemsets.sort_by(|a, b| a.items.len().cmp(&b.items.len()).then_with(|| a.items.cmp(&b.items)));

    let mut rules = Vec::new();
    for (ids, &count) in &counts {
        if ids.len() < 2 {
            continue;
        }
        let m = ids.len();
        for mask in 1..(1u64 << m) - 1 {
            let (ante, cons): (Vec<usize>, Vec<usize>) = {
                let mut a = Vec::new();
                let mut c = Vec::new();
                for (bit, &v) in ids.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        a.push(v);
                    } else {
                        c.push(v);
                    }
                }
                (a, c)
            };
            let ante_count = counts[&ante];
            let confidence = count as f64 / ante_count as f64;
            if confidence >= min_confidence {
                rules.push(Rule {
                    antecedent: names(&ante),
                    consequent: names(&cons),
                    support: count as f64 / n as f64,
                    confidence,
                });
            }
        }
    }
    rules.sort_by(|a, b| a.antecedent.cmp(&b.antecedent).then_with(|| a.consequent.cmp(&b.consequent)));
    Ok(AprioriResult {
        transactions: n,
        itemsets,
        rules,
    })
}

/// Named rule filters; both use strict inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleProfile {
    pub name: &'static str,
    pub min_support: f64,
    pub min_confidence: f64,
}

impl RuleProfile {
    /// support > 0.05, confidence > 0.75
    pub const APPENDIX_B: RuleProfile = RuleProfile {
        name: "appendixB",
        min_support: 0.05,
        min_confidence: 0.75,
    };
    /// support > 0.15, confidence > 0.8
    pub const TABLE4: RuleProfile = RuleProfile {
        name: "table4",
        min_support: 0.15,
        min_confidence: 0.8,
    };

    pub fn by_name(name: &str) -> Result<RuleProfile, AnalysisError> {
        match name.to_ascii_lowercase().as_str() {
            "appendixb" | "appendix-b" | "default" => Ok(Self::APPENDIX_B),
            "table4" | "table-4" => Ok(Self::TABLE4),
            _ => Err(AnalysisError::UnknownProfile(name.to_string())),
        }
    }

    pub fn admits(&self, rule: &Rule) -> bool {
        rule.support > self.min_support && rule.confidence > self.min_confidence
    }
}

/// Rules mined from one (task, model) slice of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedRules {
    pub task: TaskKind,
    pub model: String,
    pub transactions: usize,
    pub rules: Vec<Rule>,
}

/// Bins, builds transactions and mines rules per (task, model), keeping the
/// rules the profile admits.
pub fn mine_rules(table: &ResultTable, registry: &LanguageRegistry, profile: &RuleProfile) -> Result<Vec<MinedRules>, AnalysisError> {
    let binned = bin_scores(table, 30, 60)?;
    let mut slices: BTreeMap<(TaskKind, String), Vec<BinnedRow>> = BTreeMap::new();
    for b in binned {
        slices.entry((b.row.task(), b.row.model.clone())).or_default().push(b);
    }
    let mut out = Vec::new();
    for ((task, model), rows) in slices {
        let txs = transactions(&rows, registry);
        let result = apriori(&txs, profile.min_support, profile.min_confidence)?;
        out.push(MinedRules {
            task,
            model,
            transactions: result.transactions,
            rules: result.rules.into_iter().filter(|r| profile.admits(r)).collect(),
        });
    }
    Ok(out)
}

/// Highest-scoring configuration for one (task, model, language); ties go to
/// the earliest configuration in canonical order. Every configuration must be
/// present, either scored or marked unavailable.
pub fn top_configuration(table: &ResultTable, task: TaskKind, language: &str, model: &str) -> Result<(Configuration, f64), AnalysisError> {
    let key = key_label(task, model, language);
    let mut missing = Vec::new();
    let mut best: Option<(Configuration, f64)> = None;
    for config in enumerate_configurations(task) {
        match table.get(model, language, &config) {
            Some(score) => {
                if best.map_or(true, |(_, b)| score > b) {
                    best = Some((config, score));
                }
            }
            None => {
                let k = (task, model.to_string(), language.to_string(), config.code());
                if !table.unavailable().contains(&k) {
                    missing.push(config.code());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingConfigs { key, missing });
    }
    best.ok_or(AnalysisError::NoResults(key))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub direct: Configuration,
    pub pretranslate: Configuration,
}

impl Baselines {
    /// Direct inference: all source, zero-shot (`SSZS`). Complete
    /// pre-translation: all English, few-shot (`EEEE`).
    pub fn standard(task: TaskKind) -> Self {
        let code = |c: &str| parse_config_code(c, task).expect("valid code");
        Baselines {
            direct: code("SSZS"),
            pretranslate: code("EEEE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub task: TaskKind,
    pub model: String,
    pub language: String,
    pub top_config: String,
    pub top_score: f64,
    pub direct_score: f64,
    pub pretranslate_score: f64,
    /// Percent.
    pub vs_direct: f64,
    /// Percent.
    pub vs_pretranslate: f64,
}

/// 100 (top − base) / base against both baselines.
pub fn improvement_over_baselines(
    table: &ResultTable,
    task: TaskKind,
    language: &str,
    model: &str,
    baselines: &Baselines,
) -> Result<Improvement, AnalysisError> {
    let key = key_label(task, model, language);
    let (top_config, top_score) = top_configuration(table, task, language, model)?;
    let base = |c: &Configuration| -> Result<f64, AnalysisError> {
        let s = table.get(model, language, c).ok_or_else(|| AnalysisError::MissingConfigs {
            key: key.clone(),
            missing: vec![c.code()],
        })?;
        if s == 0.0 {
            return Err(AnalysisError::ZeroBaseline {
                key: key.clone(),
                config: c.code(),
            });
        }
        Ok(s)
    };
    let direct_score = base(&baselines.direct)?;
    let pretranslate_score = base(&baselines.pretranslate)?;
    Ok(Improvement {
        task,
        model: model.to_string(),
        language: language.to_string(),
        top_config: top_config.code(),
        top_score,
        direct_score,
        pretranslate_score,
        vs_direct: 100.0 * (top_score - direct_score) / direct_score,
        vs_pretranslate: 100.0 * (top_score - pretranslate_score) / pretranslate_score,
    })
}

/// Which configurations enter gap pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapScope {
    /// Few-shot configurations only, so every component contributes the same
    /// number of pairs.
    #[default]
    FewShot,
    /// Every configuration, zero-shot included (the examples component still
    /// only pairs few-shot rows).
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub component: Component,
    pub mean_gap: f64,
    pub k: usize,
}

fn with_component(config: &Configuration, component: Component, lang: ComponentLang) -> Option<Configuration> {
    let (mut i, mut x, mut e, mut o) = (config.instruction(), config.context(), config.examples(), config.output());
    match component {
        Component::Instruction => {
            i = lang;
            if config.task() == TaskKind::Nli {
                o = lang;
            }
        }
        Component::Context => x = lang,
        Component::Examples => {
            e = match lang {
                ComponentLang::Source => ExamplesMode::Source,
                ComponentLang::English => ExamplesMode::English,
            }
        }
        Component::Output => {
            if config.task() == TaskKind::Nli {
                return None;
            }
            o = lang;
        }
    }
    Configuration::new(config.task(), i, x, e, o).ok()
}

/// Mean of Eval(English in `component`) − Eval(Source in `component`) over
/// configuration pairs that differ only there, matched within each
/// (task, model, language).
pub fn performance_gap_scoped(table: &ResultTable, component: Component, scope: GapScope) -> Result<GapReport, AnalysisError> {
    let mut total = 0.0;
    let mut k = 0usize;
    for (task, model, language) in table.keys() {
        for config in enumerate_configurations(task) {
            if config.component(component) != Some(ComponentLang::English) {
                continue;
            }
            if scope == GapScope::FewShot && config.is_zero_shot() {
                continue;
            }
            let Some(twin) = with_component(&config, component, ComponentLang::Source) else {
                continue;
            };
            if let (Some(en), Some(src)) = (table.get(&model, &language, &config), table.get(&model, &language, &twin)) {
                total += en - src;
                k += 1;
            }
        }
    }
    if k == 0 {
        return Err(AnalysisError::NoPairs(component));
    }
    Ok(GapReport {
        component,
        mean_gap: total / k as f64,
        k,
    })
}

pub fn performance_gap(table: &ResultTable, component: Component) -> Result<GapReport, AnalysisError> {
    performance_gap_scoped(table, component, GapScope::default())
}

/// One scored instance under a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub config: Configuration,
    pub score: f64,
}

/// Point-biserial correlation between "component is in the source language"
/// and instance score; positive values favour the source language. Zero-shot
/// records are skipped for the examples component.
pub fn component_correlation(records: &[InstanceScore], component: Component) -> Result<CorrelationResult, AnalysisError> {
    let mut binary = Vec::new();
    let mut scores = Vec::new();
    for r in records {
        if let Some(lang) = r.config.component(component) {
            binary.push(lang == ComponentLang::Source);
            scores.push(r.score);
        }
    }
    Ok(point_biserial(&binary, &scores)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtPair {
    pub hypothesis: String,
    pub reference: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageQuality {
    pub language: String,
    pub pairs: usize,
    pub similarity: f64,
    pub rouge1: f64,
    pub bleu: f64,
    pub chrf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtQualityReport {
    pub per_language: Vec<LanguageQuality>,
    /// Pearson of similarity vs mean ROUGE-1 across languages. With two
    /// languages the p-value is reported as 1.
    pub similarity_correlation: CorrelationResult,
}

/// Per-language translation quality (mean sentence ROUGE-1 and chrF, corpus
/// BLEU) and its correlation with typological similarity to English.
pub fn mt_quality_study(
    pairs: &[MtPair],
    similarity: &HashMap<String, f64>,
    tokenizers: &TokenizerPolicy,
) -> Result<MtQualityReport, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut by_lang: BTreeMap<&str, Vec<&MtPair>> = BTreeMap::new();
    for p in pairs {
        by_lang.entry(p.language.as_str()).or_default().push(p);
    }
    let mut per_language = Vec::new();
    for (lang, items) in by_lang {
        let sim = *similarity.get(lang).ok_or_else(|| AnalysisError::MissingSimilarity(lang.to_string()))?;
        let tok = tokenizers.for_language(lang);
        let n = items.len() as f64;
        let rouge1 = items.iter().map(|p| rouge(&p.hypothesis, &p.reference, RougeVariant::One, tok).value).sum::<f64>() / n;
        let chrf_mean = items.iter().map(|p| chrf(&p.hypothesis, &p.reference).value).sum::<f64>() / n;
        let hyps: Vec<&str> = items.iter().map(|p| p.hypothesis.as_str()).collect();
        let refs: Vec<&str> = items.iter().map(|p| p.reference.as_str()).collect();
        let bleu = bleu_with(&hyps, &refs, 4, tok)?.value;
        per_language.push(LanguageQuality {
            language: lang.to_string(),
            pairs: items.len(),
            similarity: sim,
            rouge1,
            bleu,
            chrf: chrf_mean,
        });
    }
    let xs: Vec<f64> = per_language.iter().map(|l| l.similarity).collect();
    let ys: Vec<f64> = per_language.iter().map(|l| l.rouge1).collect();
    let r = pearson_coefficient(&xs, &ys)?;
    Ok(MtQualityReport {
        similarity_correlation: CorrelationResult {
            coefficient: r,
            p_value: correlation_p_value(r, xs.len()),
            n: xs.len(),
        },
        per_language,
    })
}

/// Reads `language,similarity` lines (comma, tab or space separated; an
/// optional header is skipped).
pub fn parse_similarity(text: &str) -> Result<HashMap<String, f64>, AnalysisError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c == '\t' || c == ' ').filter(|s| !s.is_empty()).collect();
        if cols.len() != 2 {
            return Err(AnalysisError::Row {
                row: i,
                message: "expected `language,similarity`".into(),
            });
        }
        match cols[1].parse::<f64>() {
            Ok(v) => {
                out.insert(cols[0].to_string(), v);
            }
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(AnalysisError::Row {
                    row: i,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Report rows: top configuration and improvements for every
/// (model, language) of a task in the table. Keys whose improvement is
/// undefined are reported with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopReportRow {
    pub model: String,
    pub language: String,
    pub top_config: Option<String>,
    pub top_score: Option<f64>,
    pub vs_direct: Option<f64>,
    pub vs_pretranslate: Option<f64>,
    pub note: Option<String>,
}

pub fn top_report(table: &ResultTable, task: TaskKind) -> Vec<TopReportRow> {
    let baselines = Baselines::standard(task);
    table
        .keys()
        .into_iter()
        .filter(|(t, _, _)| *t == task)
        .map(|(_, model, language)| match improvement_over_baselines(table, task, &language, &model, &baselines) {
            Ok(imp) => TopReportRow {
                model,
                language,
                top_config: Some(imp.top_config),
                top_score: Some(imp.top_score),
                vs_direct: Some(imp.vs_direct),
                vs_pretranslate: Some(imp.vs_pretranslate),
                note: None,
            },
            Err(e) => {
                let top = top_configuration(table, task, &language, &model).ok();
                TopReportRow {
                    model,
                    language,
                    top_config: top.map(|(c, _)| c.code()),
                    top_score: top.map(|(_, s)| s),
                    vs_direct: None,
                    vs_pretranslate: None,
                    note: Some(e.to_string()),
                }
            }
        })
        .collect()
}

pub fn render_top_report(rows: &[TopReportRow]) -> String {
    let fmt_opt = |v: Option<f64>, signed: bool| match v {
        Some(x) if signed => format!("{x:+.1}%"),
        Some(x) => format!("{x:.2}"),
        None => "-".into(),
    };
    let mut out = format!("{:<10} {:<6} {:<6} {:>6} {:>9} {:>9}\n", "model", "lang", "top", "score", "vs Src", "vs Eng");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:<6} {:<6} {:>6} {:>9} {:>9}{}",
            r.model,
            r.language,
            r.top_config.as_deref().unwrap_or("-"),
            fmt_opt(r.top_score, false),
            fmt_opt(r.vs_direct, true),
            fmt_opt(r.vs_pretranslate, true),
            r.note.as_ref().map(|n| format!("  ({n})")).unwrap_or_default()
        );
    }
    out
}

pub fn render_rules(mined: &[MinedRules]) -> String {
    let mut out = String::new();
    for m in mined {
        let _ = writeln!(out, "# {} / {} ({} transactions, {} rules)", m.task, m.model, m.transactions, m.rules.len());
        let mut rules = m.rules.clone();
        rules.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(b.support.total_cmp(&a.support)));
        for r in rules {
            let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
            let _ = writeln!(
                out,
                "{{{}}} => {{{}}}  support={:.3} confidence={:.3}",
                join(&r.antecedent),
                join(&r.consequent),
                r.support,
                r.confidence
            );
        }
    }
    out
}

pub fn render_gaps(reports: &[GapReport]) -> String {
    let mut out = format!("{:<12} {:>10} {:>4}\n", "component", "mean_gap", "k");
    for r in reports {
        let _ = writeln!(out, "{:<12} {:>+10.4} {:>4}", r.component.as_str(), r.mean_gap, r.k);
    }
    out
}

/// Significance stars for a p-value.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Correlation matrix: one row per component, one column per label.
pub fn render_correlations(columns: &[(String, Vec<(Component, Result<CorrelationResult, String>)>)]) -> String {
    let mut out = format!("{:<12}", "component");
    for (label, _) in columns {
        let _ = write!(out, " {label:>14}");
    }
    out.push('\n');
    for component in Component::ALL {
        let _ = write!(out, "{:<12}", component.as_str());
        for (_, cells) in columns {
            let cell = cells.iter().find(|(c, _)| *c == component).map(|(_, r)| match r {
                Ok(c) => format!("{:+.3}{}", c.coefficient, stars(c.p_value)),
                Err(_) => "n/a".into(),
            });
            let _ = write!(out, " {:>14}", cell.unwrap_or_else(|| "-".into()));
        }
        out.push('\n');
    }
    out
}

/// Convenience wrapper used by reports.
pub fn rouge1_mean(pairs: &[(String, String)], tokenizer: metrics::Tokenizer) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|(h, r)| rouge(h, r, RougeVariant::One, tokenizer).value).sum::<f64>() / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(task: TaskKind, scores: &[(&str, f64)]) -> ResultTable {
        let mut t = ResultTable::new();
        for (code, s) in scores {
            t.push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: parse_config_code(code, task).unwrap(),
                score: *s,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn nearest_rank_one_to_ten() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 30), 3.0);
        assert_eq!(nearest_rank(&v, 60), 6.0);
        assert_eq!(nearest_rank(&v, 0), 1.0);
        assert_eq!(nearest_rank(&v, 100), 10.0);
    }

    #[test]
    fn bins_scores_one_to_ten() {
        let codes: Vec<String> = enumerate_configurations(TaskKind::Qa).iter().take(10).map(|c| c.code()).collect();
        let scores: Vec<(&str, f64)> = codes.iter().zip(1..=10).map(|(c, s)| (c.as_str(), f64::from(s))).collect();
        let binned = bin_scores(&table_from(TaskKind::Qa, &scores), 30, 60).unwrap();
        let bins: Vec<ScoreBin> = binned.iter().map(|b| b.bin).collect();
        use ScoreBin::*;
        assert_eq!(bins, [Low, Low, Medium, Medium, Medium, High, High, High, High, High]);
    }

    #[test]
    fn equal_scores_all_high() {
        let binned = bin_scores(&table_from(TaskKind::Qa, &[("SSSS", 0.5), ("SSSE", 0.5), ("SSES", 0.5)]), 30, 60).unwrap();
        assert!(binned.iter().all(|b| b.bin == ScoreBin::High));
        assert!(matches!(
            bin_scores(&table_from(TaskKind::Qa, &[("SSSS", 0.5)]), 30, 60),
            Err(AnalysisError::SmallGroup { n: 1, .. })
        ));
        assert!(matches!(bin_scores(&ResultTable::new(), 30, 60), Err(AnalysisError::Empty)));
    }

    #[test]
    fn apriori_example() {
        let txs = vec![
            Transaction::new(["A", "B", "C"]),
            Transaction::new(["A", "B"]),
            Transaction::new(["A", "C"]),
            Transaction::new(["B", "C"]),
        ];
        let res = apriori(&txs, 0.25, 0.1).unwrap();
        let rule = res
            .rules
            .iter()
            .find(|r| r.antecedent == BTreeSet::from(["A".to_string()]) && r.consequent == BTreeSet::from(["B".to_string()]))
            .unwrap();
        assert_eq!(rule.support, 0.5);
        assert!((rule.confidence - 2.0 / 3.0).abs() < 1e-15);
        let single = apriori(&[Transaction::new(["A"])], 1.0, 1.0).unwrap();
        assert_eq!(single.itemsets[0].support, 1.0);
        assert!(apriori(&txs, 1.0, 0.5).unwrap().rules.is_empty());
        assert!(apriori(&[], 0.5, 0.5).is_err());
        assert!(apriori(&txs, 0.0, 0.5).is_err());
        assert!(matches!(
            apriori(&[Transaction::new(["a=1", "a=2"])], 0.5, 0.5),
            Err(AnalysisError::ConflictingItems { .. })
        ));
    }

    #[test]
    fn profiles_are_strict() {
        let r = Rule {
            antecedent: BTreeSet::new(),
            consequent: BTreeSet::new(),
            support: 0.15,
            confidence: 0.9,
        };
        assert!(!RuleProfile::TABLE4.admits(&r));
        assert!(RuleProfile::APPENDIX_B.admits(&r));
    }

    #[test]
    fn top_and_ties() {
        let t = table_from(TaskKind::Qa, &[("SSSS", 0.5)]);
        assert!(matches!(top_configuration(&t, TaskKind::Qa, "de", "m"), Err(AnalysisError::MissingConfigs { .. })));
        let mut full = ResultTable::new();
        for c in enumerate_configurations(TaskKind::Qa) {
            let s = if c.code() == "EESE" || c.code() == "ESSS" { 0.9 } else { 0.1 };
            full.push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: c,
                score: s,
            })
            .unwrap();
        }
        let (c, s) = top_configuration(&full, TaskKind::Qa, "de", "m").unwrap();
        assert_eq!((c.code().as_str(), s), ("ESSS", 0.9));
    }

    #[test]
    fn improvement_arithmetic() {
        let mut t = ResultTable::new();
        for c in enumerate_configurations(TaskKind::Qa) {
            let s = match c.code().as_str() {
                "SSZS" | "EEEE" => 0.5,
                "SESE" => 0.75,
                _ => 0.1,
            };
            t.push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: c,
                score: s,
            })
            .unwrap();
        }
        let imp = improvement_over_baselines(&t, TaskKind::Qa, "de", "m", &Baselines::standard(TaskKind::Qa)).unwrap();
        assert!((imp.vs_direct - 50.0).abs() < 1e-12);
        assert!((imp.vs_pretranslate - 50.0).abs() < 1e-12);
    }

    #[test]
    fn gap_counts() {
        let mut t = ResultTable::new();
        for c in enumerate_configurations(TaskKind::Qa) {
            let s = if c.examples() == ExamplesMode::English { 0.7 } else { 0.5 };
            t.push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: c,
                score: s,
            })
            .unwrap();
        }
        let g = performance_gap(&t, Component::Examples).unwrap();
        assert_eq!(g.k, 8);
        assert!((g.mean_gap - 0.2).abs() < 1e-12);
        for c in [Component::Instruction, Component::Context, Component::Output] {
            let g = performance_gap(&t, c).unwrap();
            assert_eq!((g.k, g.mean_gap), (8, 0.0));
            assert_eq!(performance_gap_scoped(&t, c, GapScope::All).unwrap().k, 12);
        }
        assert!(performance_gap(&ResultTable::new(), Component::Context).is_err());
    }

    #[test]
    fn correlation_sign() {
        let recs: Vec<InstanceScore> = enumerate_configurations(TaskKind::Qa)
            .into_iter()
            .map(|c| InstanceScore {
                score: if c.context() == ComponentLang::Source { 0.9 } else { 0.3 },
                config: c,
            })
            .collect();
        assert!(component_correlation(&recs, Component::Context).unwrap().coefficient > 0.0);
        let constant: Vec<InstanceScore> = recs.iter().filter(|r| r.config.context() == ComponentLang::Source).cloned().collect();
        assert!(component_correlation(&constant, Component::Context).is_err());
    }

    #[test]
    fn mt_quality_examples() {
        let pairs = vec![
            MtPair {
                hypothesis: "a b c".into(),
                reference: "a b c".into(),
                language: "de".into(),
            },
            MtPair {
                hypothesis: "x q".into(),
                reference: "x y".into(),
                language: "fr".into(),
            },
        ];
        let sim: HashMap<String, f64> = [("de".to_string(), 0.9), ("fr".to_string(), 0.5)].into();
        let rep = mt_quality_study(&pairs, &sim, TokenizerPolicy::bundled()).unwrap();
        assert_eq!(rep.per_language[0].rouge1, 1.0);
        assert!((rep.per_language[1].rouge1 - 0.5).abs() < 1e-12);
        assert!((rep.similarity_correlation.coefficient - 1.0).abs() < 1e-12);
        assert_eq!(rep.similarity_correlation.p_value, 1.0);
        let sim_missing: HashMap<String, f64> = [("de".to_string(), 0.9)].into();
        assert!(matches!(
            mt_quality_study(&pairs, &sim_missing, TokenizerPolicy::bundled()),
            Err(AnalysisError::MissingSimilarity(l)) if l == "fr"
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = ResultTable::fixture("xquad").unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ResultTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows(), t.rows());
        assert_eq!(back.unavailable(), t.unavailable());
        assert!(ResultTable::read_csv("task,model,language,config_code,score\nqa,m,de,SSSS,0.1\nqa,m,de,SSSS,0.2\n".as_bytes()).is_err());
    }

    #[test]
    fn similarity_parsing() {
        let m = parse_similarity("language,similarity\nde,0.8\nfr\t0.6\n").unwrap();
        assert_eq!(m["de"], 0.8);
        assert_eq!(m["fr"], 0.6);
    }
}
