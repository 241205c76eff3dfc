use std::path::Path;
use std::sync::Arc;

use selprompt_core::config_space::{parse_config_code, LanguageRegistry, TaskKind};
use selprompt_core::corpus::{Payload, SamplePolicy, TaskInstance};
use selprompt_core::gateway::{ChatModel, Gateway, Limiter, ModelParams, ReplayModel, ScriptedModel};
use selprompt_core::metrics::TokenizerPolicy;
use selprompt_core::postproc::{LabelLexicon, PrefixLexicon, ScriptDetector};
use selprompt_core::prompting::PromptTemplates;
use selprompt_core::runner::{aggregate, load_run, sweep, SweepContext, SweepOptions, SweepSpec, RECORDS_FILE};
use selprompt_core::store::{KeyedStore, MemoryStore};
use selprompt_core::translation::{MockTranslator, TranslationCache};

fn dataset(n: usize) -> Vec<TaskInstance> {
    (0..n)
        .map(|i| TaskInstance {
            id: format!("q{i}"),
            language: "de".into(),
            payload: Payload::Qa {
                question: format!("Frage {i}?"),
                context: format!("Absatz {i} über Berlin."),
                answers: vec![format!("Berlin {i}")],
            },
        })
        .collect()
}

fn context(model: Arc<dyn ChatModel>, store: Arc<dyn KeyedStore>) -> SweepContext {
    let registry = LanguageRegistry::bundled();
    SweepContext {
        gateway: Gateway::new(model, store, Arc::new(Limiter::unlimited())),
        translator: Arc::new(MockTranslator::new()),
        cache: TranslationCache::in_memory(),
        detector: Arc::new(ScriptDetector::from_registry(&registry)),
        templates: PromptTemplates::bundled().clone(),
        registry,
        labels: LabelLexicon::bundled().clone(),
        prefixes: PrefixLexicon::bundled().clone(),
        tokenizers: TokenizerPolicy::bundled().clone(),
    }
}

fn scripted() -> Arc<dyn ChatModel> {
    Arc::new(ScriptedModel::new(
        "scripted",
        Arc::new(|p: &selprompt_core::prompting::CompiledPrompt| {
            let digits: String = p.text.chars().filter(char::is_ascii_digit).take(1).collect();
            format!("Berlin {digits}")
        }),
    ))
}

fn spec(codes: &[&str], n: usize) -> SweepSpec {
    SweepSpec {
        task: TaskKind::Qa,
        language: "de".into(),
        instances: dataset(n),
        policy: SamplePolicy::new(250, 16_000).unwrap(),
        seed: 7,
        shots: 1,
        configs: codes.iter().map(|c| parse_config_code(c, TaskKind::Qa).unwrap()).collect(),
    }
}

fn opts(dir: &Path, workers: usize, stop_after: Option<usize>) -> SweepOptions {
    SweepOptions {
        out_dir: dir.to_path_buf(),
        workers,
        stop_after,
    }
}

fn record_keys(dir: &Path) -> std::collections::BTreeSet<String> {
    load_run(dir).unwrap().1.iter().map(|r| r.key()).collect()
}

#[test]
fn two_runs_are_byte_identical() {
    let s = spec(&["SSZS", "EESE", "SESS"], 6);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(a.path(), 4, None)).unwrap();
    let sb = sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(b.path(), 1, None)).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(sa.records, 15);
    for f in [RECORDS_FILE, "manifest.json", "results.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn interrupted_then_resumed_matches_uninterrupted() {
    let s = spec(&["SSZS", "EEEE"], 5);
    let full = tempfile::tempdir().unwrap();
    let part = tempfile::tempdir().unwrap();
    sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(full.path(), 3, None)).unwrap();
    let first = sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(part.path(), 3, Some(3))).unwrap();
    assert!(!first.complete);
    assert_eq!(first.records, 3);
    // Simulate a torn final write.
    let path = part.path().join(RECORDS_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.extend_from_slice(b"{\"run_id\":\"tor");
    std::fs::write(&path, bytes).unwrap();
    let second = sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(part.path(), 3, None)).unwrap();
    assert!(second.complete);
    assert_eq!(second.resumed, 3);
    assert_eq!(record_keys(full.path()), record_keys(part.path()));
    assert_eq!(
        std::fs::read(full.path().join(RECORDS_FILE)).unwrap(),
        std::fs::read(part.path().join(RECORDS_FILE)).unwrap()
    );
}

#[test]
fn replay_miss_is_isolated() {
    let store: Arc<dyn KeyedStore> = Arc::new(MemoryStore::new());
    let s = spec(&["SSZS"], 5);
    let rec_dir = tempfile::tempdir().unwrap();
    sweep(&s, &context(scripted(), store.clone()), &opts(rec_dir.path(), 2, None)).unwrap();

    let mut changed = s.clone();
    if let Payload::Qa { question, .. } = &mut changed.instances[2].payload {
        question.push_str(" (neu)");
    }
    let replay: Arc<dyn ChatModel> = Arc::new(ReplayModel::new("scripted", ModelParams::default()));
    let dir = tempfile::tempdir().unwrap();
    let summary = sweep(&changed, &context(replay, store), &opts(dir.path(), 2, None)).unwrap();
    assert_eq!(summary.per_config[0].attempted, 5);
    assert_eq!(summary.per_config[0].failed, 1);
    let (_, records) = load_run(dir.path()).unwrap();
    let failed: Vec<_> = records.iter().filter(|r| r.failure.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].instance_id, "q2");
    assert!(failed[0].failure.as_ref().unwrap().message.contains("replay miss"));
}

#[test]
fn config_and_store_errors_have_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let replay: Arc<dyn ChatModel> = Arc::new(ReplayModel::new("scripted", ModelParams::default()));
    let err = sweep(&spec(&["SSZS"], 3), &context(replay, Arc::new(MemoryStore::new())), &opts(dir.path(), 1, None)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join(RECORDS_FILE).exists());

    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, "x").unwrap();
    let err = sweep(&spec(&["SSZS"], 3), &context(scripted(), Arc::new(MemoryStore::new())), &opts(&file, 1, None)).unwrap_err();
    assert_eq!(err.exit_code(), 3);

    let other = tempfile::tempdir().unwrap();
    sweep(&spec(&["SSZS"], 3), &context(scripted(), Arc::new(MemoryStore::new())), &opts(other.path(), 1, None)).unwrap();
    let err = sweep(&spec(&["EEZE"], 3), &context(scripted(), Arc::new(MemoryStore::new())), &opts(other.path(), 1, None)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn aggregate_means_and_conservation() {
    let s = spec(&["SSZS", "EEZE"], 4);
    let dir = tempfile::tempdir().unwrap();
    let summary = sweep(&s, &context(scripted(), Arc::new(MemoryStore::new())), &opts(dir.path(), 2, None)).unwrap();
    let (manifest, records) = load_run(dir.path()).unwrap();
    let table = aggregate(&manifest, &records);
    for cs in &summary.per_config {
        assert_eq!(cs.attempted, cs.scored + cs.failed);
        let config = parse_config_code(&cs.config_code, TaskKind::Qa).unwrap();
        let scores: Vec<f64> = records
            .iter()
            .filter(|r| r.config_code == cs.config_code)
            .filter_map(|r| r.score.map(|s| s.value))
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert_eq!(table.get("scripted", "de", &config), Some(mean));
    }
    // Source-output answers need no back-translation and match the gold exactly.
    let src = records.iter().filter(|r| r.config_code == "SSZS");
    for r in src {
        assert_eq!(r.post_translated_output, None);
        assert_eq!(r.score.unwrap().value, 1.0);
    }
    let en = records.iter().find(|r| r.config_code == "EEZE").unwrap();
    assert!(en.post_translated_output.is_some());
}

#[test]
fn all_failed_records_give_empty_table() {
    let store: Arc<dyn KeyedStore> = Arc::new(MemoryStore::new());
    store.put_if_absent("unrelated", serde_json::json!({})).unwrap();
    let replay: Arc<dyn ChatModel> = Arc::new(ReplayModel::new("scripted", ModelParams::default()));
    let dir = tempfile::tempdir().unwrap();
    let summary = sweep(&spec(&["SSZS"], 3), &context(replay, store), &opts(dir.path(), 1, None)).unwrap();
    assert_eq!(summary.per_config[0].failed, 3);
    let (manifest, records) = load_run(dir.path()).unwrap();
    assert!(aggregate(&manifest, &records).is_empty());
}
