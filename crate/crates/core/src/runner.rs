//! Sweeps: every sampled instance under every configuration, compiled,
//! completed, back-translated, normalized and scored, with records appended
//! to a resumable line-delimited store.
//!
//! Output directory layout:
//! - `manifest.json`: the [`RunManifest`], written before any record.
//! - `records.jsonl`: one [`RunRecord`] per line in cell order. Contents are
//!   a pure function of the manifest inputs and provider behavior.
//! - `timings.jsonl`: per-record stage durations (not deterministic).
//! - `results.csv`, `summary.json`: written when every cell is done.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ResultRow, ResultTable};
use crate::config_space::{ComponentLang, Configuration, LanguageRegistry, TaskKind};
use crate::corpus::{sample, split_examples_pool, Payload, SamplePolicy, TaskInstance};
use crate::gateway::{Gateway, ModelKind, ModelParams};
use crate::metrics::{entity_f1, rouge, token_f1_with, Metric, RougeVariant, Score, TokenizerPolicy};
use crate::postproc::{
    check_output_language, normalize_nli, normalize_qa_for, parse_ner, postprocess_qa, project_biose, strip_summary_prefix,
    ErrorClass, LabelLexicon, LangCheck, LanguageDetector, NormalizedOutput, OutputValue, PrefixLexicon,
};
use crate::prompting::{format_entities, PromptCompiler, PromptTemplates};
use crate::store::{open_append, read_jsonl_prefix, StoreError};
use crate::translation::{back_translate, sha256_hex, ProviderKind, TranslationCache, Translator};

pub const RECORD_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const ENGLISH: &str = "en";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store error: {0}")]
    Write(String),
}

impl SweepError {
    /// 2 for configuration errors, 3 for store errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::Config(_) => 2,
            SweepError::Store(_) | SweepError::Write(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub run_id: String,
    pub task: TaskKind,
    pub model: String,
    pub model_kind: ModelKind,
    pub model_params: ModelParams,
    pub translator: String,
    pub language: String,
    pub dataset_digest: String,
    pub seed: u64,
    pub policy: SamplePolicy,
    pub shots: usize,
    pub configs: Vec<String>,
    pub code_version: String,
}

impl RunManifest {
    fn compute_id(&self) -> String {
        let mut unnamed = self.clone();
        unnamed.run_id = String::new();
        let text = serde_json::to_string(&unnamed).expect("manifest serializes");
        sha256_hex(text.as_bytes())[..16].to_string()
    }
}

/// Digest over the canonical serialization of every instance, in order.
pub fn dataset_digest(instances: &[TaskInstance]) -> String {
    let mut text = String::new();
    for inst in instances {
        text.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_code: String,
    pub instance_id: String,
    pub prompt_hash: Option<String>,
    pub raw_output: Option<String>,
    pub normalized_output: Option<NormalizedOutput>,
    pub post_translated_output: Option<String>,
    pub output_language_ok: Option<bool>,
    pub error_class: ErrorClass,
    pub failure: Option<StageFailure>,
    pub score: Option<Score>,
}

impl RunRecord {
    pub fn key(&self) -> String {
        cell_key(&self.config_code, &self.instance_id)
    }
}

fn cell_key(config: &str, instance: &str) -> String {
    format!("{config}\u{1f}{instance}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub compile_ms: f64,
    pub complete_ms: f64,
    pub postprocess_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub config_code: String,
    pub instance_id: String,
    pub timings: StageTimings,
}

/// What to run.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub task: TaskKind,
    pub language: String,
    /// Full dataset; the demonstration pool and evaluation sample are drawn from it.
    pub instances: Vec<TaskInstance>,
    pub policy: SamplePolicy,
    pub seed: u64,
    /// Demonstrations per few-shot prompt.
    pub shots: usize,
    pub configs: Vec<Configuration>,
}

/// Providers and lexicons used by each cell.
pub struct SweepContext {
    pub gateway: Gateway,
    pub translator: Arc<dyn Translator>,
    pub cache: TranslationCache,
    pub detector: Arc<dyn LanguageDetector>,
    pub templates: PromptTemplates,
    pub registry: LanguageRegistry,
    pub labels: LabelLexicon,
    pub prefixes: PrefixLexicon,
    pub tokenizers: TokenizerPolicy,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Stop after writing this many new records (simulated interruption).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_code: String,
    pub attempted: usize,
    pub scored: usize,
    pub failed: usize,
    pub mean_score: Option<f64>,
    pub error_classes: BTreeMap<String, usize>,
    pub language_checked: usize,
    pub language_ok: usize,
    /// language_ok / language_checked.
    pub output_language_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub total_cells: usize,
    pub records: usize,
    pub resumed: usize,
    pub complete: bool,
    pub per_config: Vec<ConfigSummary>,
}

/// Cells in order: configurations outer, instances inner.
fn cells(configs: &[Configuration], instances: &[TaskInstance]) -> Vec<(Configuration, usize)> {
    configs
        .iter()
        .flat_map(|c| (0..instances.len()).map(move |i| (*c, i)))
        .collect()
}

struct Prepared {
    manifest: RunManifest,
    demos: Vec<TaskInstance>,
    eval: Vec<TaskInstance>,
}

fn prepare(spec: &SweepSpec, ctx: &SweepContext) -> Result<Prepared, SweepError> {
    let cfg = |m: String| SweepError::Config(m);
    if spec.configs.is_empty() {
        return Err(cfg("no configurations selected".into()));
    }
    if let Some(c) = spec.configs.iter().find(|c| c.task() != spec.task) {
        return Err(cfg(format!("configuration {} is for task {}, not {}", c.code(), c.task(), spec.task)));
    }
    if spec.instances.is_empty() {
        return Err(cfg("dataset is empty".into()));
    }
    if let Some(inst) = spec.instances.iter().find(|i| i.task() != spec.task) {
        return Err(cfg(format!("instance {} is a {} instance", inst.id, inst.task())));
    }
    let mut seen = HashSet::new();
    if let Some(inst) = spec.instances.iter().find(|i| !seen.insert(i.id.as_str())) {
        return Err(cfg(format!("duplicate instance id {}", inst.id)));
    }
    let few_shot = spec.configs.iter().any(|c| !c.is_zero_shot());
    if few_shot && spec.shots == 0 {
        return Err(cfg("few-shot configurations need --shots >= 1".into()));
    }
    if ctx.gateway.model().kind() == ModelKind::Replay && ctx.gateway.is_store_empty()? {
        return Err(cfg("replay model has no recorded completions".into()));
    }
    if ctx.translator.kind() == ProviderKind::Replay && ctx.cache.is_empty().map_err(|e| cfg(e.to_string()))? {
        return Err(cfg("replay translator has no recorded translations".into()));
    }
    let (demos, rest) = if few_shot {
        split_examples_pool(&spec.instances, spec.shots, spec.seed).map_err(|e| cfg(e.to_string()))?
    } else {
        (Vec::new(), spec.instances.clone())
    };
    let eval = sample(&rest, &spec.policy, spec.seed);
    if eval.is_empty() {
        return Err(cfg("no instance fits the sampling policy".into()));
    }
    let model = ctx.gateway.model();
    let mut manifest = RunManifest {
        format_version: RECORD_FORMAT_VERSION,
        run_id: String::new(),
        task: spec.task,
        model: model.name().to_string(),
        model_kind: model.kind(),
        model_params: *model.params(),
        translator: ctx.translator.name().to_string(),
        language: spec.language.clone(),
        dataset_digest: dataset_digest(&spec.instances),
        seed: spec.seed,
        policy: spec.policy,
        shots: if few_shot { spec.shots } else { 0 },
        configs: spec.configs.iter().map(Configuration::code).collect(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    manifest.run_id = manifest.compute_id();
    Ok(Prepared { manifest, demos, eval })
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> SweepError {
    SweepError::Write(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SweepError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| write_error(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| write_error(path, e))
}

fn serialize_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    line
}

/// Runs (or resumes) a sweep into `opts.out_dir`.
pub fn sweep(spec: &SweepSpec, ctx: &SweepContext, opts: &SweepOptions) -> Result<RunSummary, SweepError> {
    let Prepared { manifest, demos, eval } = prepare(spec, ctx)?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| write_error(&opts.out_dir, e))?;
    let manifest_path = opts.out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| write_error(&manifest_path, e))?;
        let existing: RunManifest = serde_json::from_str(&text)
            .map_err(|e| SweepError::Config(format!("{}: {e}", manifest_path.display())))?;
        if existing.run_id != manifest.run_id {
            return Err(SweepError::Config(format!(
                "{} holds run {}, these inputs are run {}",
                opts.out_dir.display(),
                existing.run_id,
                manifest.run_id
            )));
        }
    } else {
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&manifest_path, text.as_bytes())?;
    }

    let records_path = opts.out_dir.join(RECORDS_FILE);
    let (existing, valid_len) = read_jsonl_prefix(&records_path)?;
    let mut done: BTreeMap<String, RunRecord> = BTreeMap::new();
    for (i, v) in existing.into_iter().enumerate() {
        let rec: RunRecord = serde_json::from_value(v).map_err(|e| StoreError::Corrupt {
            path: records_path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.run_id == manifest.run_id {
            done.insert(rec.key(), rec);
        }
    }
    let resumed = done.len();
    let all_cells = cells(&spec.configs, &eval);
    let pending: Vec<(Configuration, usize)> = all_cells
        .iter()
        .filter(|(c, i)| !done.contains_key(&cell_key(&c.code(), &eval[*i].id)))
        .cloned()
        .collect();

    let mut records_file = open_append(&records_path, valid_len)?;
    let timings_path = opts.out_dir.join(TIMINGS_FILE);
    let mut timings_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&timings_path)
        .map_err(|e| write_error(&timings_path, e))?;

    let limit = opts.stop_after.unwrap_or(usize::MAX).min(pending.len());
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = opts.workers.max(1).min(pending.len().max(1));
    let compiler = PromptCompiler::new(&ctx.templates, &ctx.registry);
    let mut written = 0usize;
    let mut write_failure: Option<SweepError> = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, RunRecord, StageTimings)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, pending, eval, demos, manifest, compiler) =
                (&next, &stop, &pending, &eval, &demos, &manifest, &compiler);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= limit {
                    break;
                }
                let (config, inst_idx) = pending[idx];
                let (rec, t) = run_cell(&manifest.run_id, &config, &eval[inst_idx], demos, &spec.language, ctx, compiler);
                if tx.send((idx, rec, t)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer: BTreeMap<usize, (RunRecord, StageTimings)> = BTreeMap::new();
        for (idx, rec, t) in rx {
            buffer.insert(idx, (rec, t));
            while let Some((rec, t)) = buffer.remove(&written) {
                if write_failure.is_some() {
                    break;
                }
                let timing = TimingRecord {
                    config_code: rec.config_code.clone(),
                    instance_id: rec.instance_id.clone(),
                    timings: t,
                };
                let result = records_file
                    .write_all(serialize_line(&rec).as_bytes())
                    .and_then(|_| records_file.flush())
                    .map_err(|e| write_error(&records_path, e))
                    .and_then(|_| {
                        timings_file
                            .write_all(serialize_line(&timing).as_bytes())
                            .map_err(|e| write_error(&timings_path, e))
                    });
                match result {
                    Ok(()) => {
                        done.insert(rec.key(), rec);
                        written += 1;
                    }
                    Err(e) => {
                        write_failure = Some(e);
                        stop.store(true, Ordering::SeqCst);
                    }
                }
            }
        }
    });
    if let Some(e) = write_failure {
        return Err(e);
    }
    records_file.sync_all().map_err(|e| write_error(&records_path, e))?;

    let ordered: Vec<RunRecord> = all_cells
        .iter()
        .filter_map(|(c, i)| done.get(&cell_key(&c.code(), &eval[*i].id)).cloned())
        .collect();
    let complete = ordered.len() == all_cells.len();
    let summary = RunSummary {
        run_id: manifest.run_id.clone(),
        total_cells: all_cells.len(),
        records: ordered.len(),
        resumed,
        complete,
        per_config: summarize(&spec.configs, &ordered),
    };
    if complete {
        let table = aggregate(&manifest, &ordered);
        let mut csv = Vec::new();
        table
            .write_csv(&mut csv)
            .map_err(|e| SweepError::Write(e.to_string()))?;
        write_atomic(&opts.out_dir.join(RESULTS_FILE), &csv)?;
        let mut text = serde_json::to_string_pretty(&summary.per_config).expect("summary serializes");
        text.push('\n');
        write_atomic(&opts.out_dir.join(SUMMARY_FILE), text.as_bytes())?;
    }
    Ok(summary)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn failure(run_id: &str, config: &Configuration, inst: &TaskInstance, prompt_hash: Option<String>, raw: Option<String>, stage: &str, message: String) -> RunRecord {
    RunRecord {
        run_id: run_id.to_string(),
        config_code: config.code(),
        instance_id: inst.id.clone(),
        prompt_hash,
        raw_output: raw,
        normalized_output: None,
        post_translated_output: None,
        output_language_ok: None,
        error_class: ErrorClass::None,
        failure: Some(StageFailure {
            stage: stage.to_string(),
            message,
        }),
        score: None,
    }
}

/// Runs one (configuration, instance) cell. Never fails: stage errors become
/// records without a score.
pub fn run_cell(
    run_id: &str,
    config: &Configuration,
    inst: &TaskInstance,
    demos: &[TaskInstance],
    source_lang: &str,
    ctx: &SweepContext,
    compiler: &PromptCompiler<'_>,
) -> (RunRecord, StageTimings) {
    let mut t = StageTimings::default();
    let demos: &[TaskInstance] = if config.is_zero_shot() { &[] } else { demos };
    let started = Instant::now();
    let prompt = compiler.compile(config, inst, demos, source_lang, ctx.translator.as_ref(), &ctx.cache);
    t.compile_ms = ms(started);
    let prompt = match prompt {
        Ok(p) => p,
        Err(e) => return (failure(run_id, config, inst, None, None, "compile", e.to_string()), t),
    };
    let prompt_hash = sha256_hex(prompt.text.as_bytes());
    let started = Instant::now();
    let completion = ctx.gateway.complete(&prompt);
    t.complete_ms = ms(started);
    let raw = match completion {
        Ok(c) => c.response_text,
        Err(e) => return (failure(run_id, config, inst, Some(prompt_hash), None, "complete", e.to_string()), t),
    };
    let started = Instant::now();
    let out_lang = match config.output() {
        ComponentLang::English => ENGLISH,
        ComponentLang::Source => source_lang,
    };
    let result = postprocess_and_score(&raw, out_lang, inst, ctx);
    t.postprocess_ms = ms(started);
    let record = match result {
        Ok(p) => RunRecord {
            run_id: run_id.to_string(),
            config_code: config.code(),
            instance_id: inst.id.clone(),
            prompt_hash: Some(prompt_hash),
            raw_output: Some(raw),
            output_language_ok: p.normalized.output_language_ok,
            error_class: p.normalized.error_class,
            normalized_output: Some(p.normalized),
            post_translated_output: p.post_translated,
            failure: None,
            score: Some(p.score),
        },
        Err(e) => failure(run_id, config, inst, Some(prompt_hash), Some(raw), "back_translate", e),
    };
    (record, t)
}

struct Postprocessed {
    normalized: NormalizedOutput,
    post_translated: Option<String>,
    score: Score,
}

fn lang_flag(check: LangCheck, error: &mut ErrorClass) -> Option<bool> {
    if check == LangCheck::Mismatch && *error == ErrorClass::None {
        *error = ErrorClass::WrongLanguage;
    }
    check.as_bool()
}

fn postprocess_and_score(raw: &str, out_lang: &str, inst: &TaskInstance, ctx: &SweepContext) -> Result<Postprocessed, String> {
    let gold_lang = inst.language.as_str();
    let needs_bt = out_lang != gold_lang;
    let bt = |text: &str| -> Result<String, String> {
        if !needs_bt {
            return Ok(text.to_string());
        }
        back_translate(text, out_lang, gold_lang, ctx.translator.as_ref(), &ctx.cache).map_err(|e| e.to_string())
    };
    let detector = ctx.detector.as_ref();
    let tokenizer = ctx.tokenizers.for_language(gold_lang);
    match &inst.payload {
        Payload::Qa { answers, .. } => {
            let check = check_output_language(raw, out_lang, detector);
            let translated = bt(raw)?;
            let mut normalized = postprocess_qa(&translated, gold_lang);
            normalized.output_language_ok = lang_flag(check, &mut normalized.error_class);
            let answer = match &normalized.value {
                OutputValue::Qa { answer_text } => answer_text.clone(),
                _ => unreachable!("qa postprocessing yields a qa value"),
            };
            let golds: Vec<String> = answers.iter().map(|a| normalize_qa_for(a, gold_lang)).collect();
            let score = token_f1_with(&answer, &golds, tokenizer);
            Ok(Postprocessed {
                normalized,
                post_translated: needs_bt.then_some(translated),
                score,
            })
        }
        Payload::Ner { tokens, tags } => {
            let parsed = parse_ner(raw);
            let surfaces: Vec<&str> = parsed.entities.iter().map(|(_, s)| s.as_str()).collect();
            let check = check_output_language(&surfaces.join(" "), out_lang, detector);
            let mut entities = Vec::with_capacity(parsed.entities.len());
            for (ty, surface) in &parsed.entities {
                entities.push((*ty, bt(surface)?));
            }
            let projection = project_biose(tokens, &entities);
            let mut error_class = parsed.error_class;
            let output_language_ok = lang_flag(check, &mut error_class);
            let score = entity_f1(&projection.tags, tags).map_err(|e| e.to_string())?;
            let post_translated = needs_bt.then(|| format_entities(&entities));
            Ok(Postprocessed {
                normalized: NormalizedOutput {
                    task: TaskKind::Ner,
                    value: OutputValue::Ner { entities },
                    output_language_ok,
                    error_class,
                },
                post_translated,
                score,
            })
        }
        Payload::Nli { label, .. } => {
            let (pred, error_class) = normalize_nli(raw, &ctx.labels);
            let hit = pred == Some(*label);
            Ok(Postprocessed {
                normalized: NormalizedOutput {
                    task: TaskKind::Nli,
                    value: OutputValue::Nli { label: pred },
                    output_language_ok: Some(error_class != ErrorClass::WrongLanguage),
                    error_class,
                },
                post_translated: None,
                score: Score::new(Metric::Accuracy, if hit { 1.0 } else { 0.0 }),
            })
        }
        Payload::Sum { reference_summary, .. } => {
            let (stripped, had_prefix) = strip_summary_prefix(raw, &ctx.prefixes);
            let check = check_output_language(&stripped, out_lang, detector);
            let translated = bt(&stripped)?;
            let (summary, had_prefix_after) = strip_summary_prefix(&translated, &ctx.prefixes);
            let mut error_class = if had_prefix || had_prefix_after {
                ErrorClass::ExtraneousInformation
            } else {
                ErrorClass::None
            };
            let output_language_ok = lang_flag(check, &mut error_class);
            let score = rouge(&summary, reference_summary, RougeVariant::One, tokenizer);
            Ok(Postprocessed {
                normalized: NormalizedOutput {
                    task: TaskKind::Sum,
                    value: OutputValue::Sum { summary_text: summary },
                    output_language_ok,
                    error_class,
                },
                post_translated: needs_bt.then_some(translated),
                score,
            })
        }
    }
}

/// Per-configuration counts, mean score, error classes and output-language rate.
pub fn summarize(configs: &[Configuration], records: &[RunRecord]) -> Vec<ConfigSummary> {
    configs
        .iter()
        .map(|c| {
            let code = c.code();
            let mut s = ConfigSummary {
                config_code: code.clone(),
                ..Default::default()
            };
            let mut total = 0.0;
            for r in records.iter().filter(|r| r.config_code == code) {
                s.attempted += 1;
                match &r.score {
                    Some(score) => {
                        s.scored += 1;
                        total += score.value;
                    }
                    None => s.failed += 1,
                }
                if r.failure.is_none() {
                    *s.error_classes.entry(r.error_class.as_str().to_string()).or_default() += 1;
                }
                if let Some(ok) = r.output_language_ok {
                    s.language_checked += 1;
                    s.language_ok += usize::from(ok);
                }
            }
            s.mean_score = (s.scored > 0).then(|| total / s.scored as f64);
            s.output_language_rate = (s.language_checked > 0).then(|| s.language_ok as f64 / s.language_checked as f64);
            s
        })
        .collect()
}

/// Mean score per configuration over scored records. Configurations with no
/// scored record are left out with a warning.
pub fn aggregate(manifest: &RunManifest, records: &[RunRecord]) -> ResultTable {
    let mut sums: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records.iter().filter(|r| r.run_id == manifest.run_id) {
        let entry = sums.entry(r.config_code.clone()).or_insert_with(|| {
            order.push(r.config_code.clone());
            (0.0, 0, 0)
        });
        match &r.score {
            Some(s) => {
                entry.0 += s.value;
                entry.1 += 1;
            }
            None => entry.2 += 1,
        }
    }
    let mut table = ResultTable::new();
    for code in order {
        let (total, scored, failed) = sums[&code];
        if scored == 0 {
            tracing::warn!(config = %code, failed, "no scored records; configuration omitted from results");
            continue;
        }
        let config = crate::config_space::parse_config_code(&code, manifest.task).expect("record codes come from the manifest");
        table
            .push(ResultRow {
                model: manifest.model.clone(),
                language: manifest.language.clone(),
                config,
                score: total / scored as f64,
            })
            .expect("one row per configuration");
    }
    table
}

/// Reads a run directory's manifest and records.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<RunRecord>), SweepError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| write_error(&manifest_path, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| SweepError::Config(format!("{}: {e}", manifest_path.display())))?;
    let records_path = dir.join(RECORDS_FILE);
    let (values, _) = read_jsonl_prefix(&records_path)?;
    let records = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v).map_err(|e| {
                SweepError::Store(StoreError::Corrupt {
                    path: records_path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect::<Result<Vec<RunRecord>, _>>()?;
    Ok((manifest, records))
}
