use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selprompt_core::analysis::{
    apriori, bin_scores, improvement_over_baselines, performance_gap, top_configuration, Baselines, ResultRow, ResultTable,
    ScoreBin, Transaction,
};
use selprompt_core::api::Service;
use selprompt_core::biose::{spans_to_tags, EntitySpan, EntityType};
use selprompt_core::config_space::{
    enumerate_configurations, table9_configurations, Component, ComponentLang, Configuration, ExamplesMode,
    LanguageRegistry, ResourceClass, TaskKind,
};
use selprompt_core::corpus::{Payload, TaskInstance};
use selprompt_core::metrics::{bleu, entity_f1, pearson, point_biserial, rouge, token_f1, MetricError, RougeVariant, Tokenizer};
use selprompt_core::recommend::{recommend, RuleTable};
use selprompt_core::runner::load_run;
use tower::ServiceExt;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Result<String, String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_f1(tp: usize, np: usize, ng: usize) -> f64 {
    match (np, ng) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if tp == 0 => 0.0,
        _ => {
            let (p, r) = (tp as f64 / np as f64, tp as f64 / ng as f64);
            2.0 * p * r / (p + r)
        }
    }
}

fn config_space() -> Result<String, String> {
    for task in [TaskKind::Qa, TaskKind::Ner, TaskKind::Sum] {
        let all = enumerate_configurations(task);
        ensure(all.len() == 24, || format!("{task}: {} configurations", all.len()))?;
        let a: BTreeSet<String> = all.iter().map(Configuration::code).collect();
        let b: BTreeSet<String> = table9_configurations(task).iter().map(Configuration::code).collect();
        ensure(a.len() == 24 && a == b, || format!("{task}: differs from the configuration table"))?;
    }
    let nli = enumerate_configurations(TaskKind::Nli);
    ensure(nli.len() == 12, || format!("nli: {} configurations", nli.len()))?;
    Ok("24/24/24 match table, nli 12".into())
}

fn random_tokens(rng: &mut ChaCha8Rng, max: usize) -> Vec<&'static str> {
    const VOCAB: [&str; 5] = ["a", "b", "c", "d", "e"];
    (0..rng.gen_range(0..=max)).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect()
}

fn multiset_overlap(p: &[&str], g: &[&str]) -> usize {
    let mut pool: Vec<&str> = g.to_vec();
    let mut hits = 0;
    for t in p {
        if let Some(i) = pool.iter().position(|x| x == t) {
            pool.swap_remove(i);
            hits += 1;
        }
    }
    hits
}

fn random_spans(rng: &mut ChaCha8Rng, len: usize) -> Vec<EntitySpan> {
    let types = [EntityType::Per, EntityType::Org, EntityType::Loc];
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.35) {
            let end = (i + rng.gen_range(0..3)).min(len - 1);
            spans.push(EntitySpan::new(types[rng.gen_range(0..3)], i, end));
            i = end + 1;
        } else {
            i += 1;
        }
    }
    spans
}

fn metric_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..500 {
        let pred = random_tokens(&mut rng, 6);
        let golds: Vec<Vec<&str>> = (0..rng.gen_range(1..=3)).map(|_| random_tokens(&mut rng, 6)).collect();
        let expected = golds
            .iter()
            .map(|g| oracle_f1(multiset_overlap(&pred, g), pred.len(), g.len()))
            .fold(0.0, f64::max);
        let gold_strings: Vec<String> = golds.iter().map(|g| g.join(" ")).collect();
        let got = token_f1(&pred.join(" "), &gold_strings).value;
        ensure(got == expected, || format!("token_f1 case {case}: {got} vs {expected}"))?;
    }
    for case in 0..500 {
        let len = rng.gen_range(1..=10);
        let (p, g) = (random_spans(&mut rng, len), random_spans(&mut rng, len));
        let tp = p.iter().filter(|s| g.contains(s)).count();
        let expected = oracle_f1(tp, p.len(), g.len());
        let got = entity_f1(&spans_to_tags(&p, len).unwrap(), &spans_to_tags(&g, len).unwrap())
            .map_err(|e| e.to_string())?
            .value;
        ensure(got == expected, || format!("entity_f1 case {case}: {got} vs {expected}"))?;
    }
    let ws = Tokenizer::Whitespace;
    let (cat_p, cat_r) = ("the cat sat on the mat", "the cat is on the mat");
    let hand: Vec<(&str, f64, f64)> = vec![
        ("rouge1 cat", rouge(cat_p, cat_r, RougeVariant::One, ws).value, 5.0 / 6.0),
        ("rouge2 cat", rouge(cat_p, cat_r, RougeVariant::Two, ws).value, 3.0 / 5.0),
        ("rougeL cat", rouge(cat_p, cat_r, RougeVariant::L, ws).value, 5.0 / 6.0),
        ("rouge1 prefix", rouge("a b c d", "a b", RougeVariant::One, ws).value, 2.0 / 3.0),
        ("rouge2 prefix", rouge("a b c d", "a b", RougeVariant::Two, ws).value, 0.5),
        ("rougeL swap", rouge("a c b d", "a b c d", RougeVariant::L, ws).value, 0.75),
        ("rouge1 case", rouge("The Cat", "the cat", RougeVariant::One, ws).value, 1.0),
        ("rouge1 disjoint", rouge("x y", "a b", RougeVariant::One, ws).value, 0.0),
        ("bleu identical", bleu(&[cat_p], &[cat_p]).unwrap().value, 1.0),
        ("bleu brevity", bleu(&["a b c d e"], &["a b c d e f g"]).unwrap().value, (-0.4f64).exp()),
        ("bleu last token", bleu(&["a b c d x"], &["a b c d y"]).unwrap().value, 0.2f64.powf(0.25)),
        (
            "bleu corpus",
            bleu(&["a b c d", "e f g h"], &["a b c d", "e f g i"]).unwrap().value,
            (35.0f64 / 128.0).powf(0.25),
        ),
        ("bleu no 4-grams", bleu(&["a b c"], &["a b c"]).unwrap().value, 0.0),
    ];
    for (name, got, want) in &hand {
        ensure((got - want).abs() <= 1e-9, || format!("{name}: {got} vs {want}"))?;
    }
    Ok(format!("500 token_f1 + 500 entity_f1 exact, {} hand values", hand.len()))
}

type RuleKey = (Vec<String>, Vec<String>, u64, u64);

fn brute_force(txs: &[Transaction], min_s: f64, min_c: f64) -> (BTreeSet<(Vec<String>, usize, u64)>, BTreeSet<RuleKey>) {
    let items: Vec<String> = txs.iter().flat_map(|t| t.items.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let n = txs.len();
    let count = |set: &[&String]| txs.iter().filter(|t| set.iter().all(|i| t.items.contains(*i))).count();
    let (mut itemsets, mut rules) = (BTreeSet::new(), BTreeSet::new());
    for mask in 1u32..(1 << items.len()) {
        let set: Vec<&String> = (0..items.len()).filter(|b| mask & (1 << b) != 0).map(|b| &items[b]).collect();
        let c = count(&set);
        let support = c as f64 / n as f64;
        if support < min_s {
            continue;
        }
        itemsets.insert((set.iter().map(|s| s.to_string()).collect(), c, support.to_bits()));
        for sub in 1u32..(1 << set.len()) - 1 {
            let ante: Vec<&String> = (0..set.len()).filter(|b| sub & (1 << b) != 0).map(|b| set[b]).collect();
            let cons: Vec<String> = (0..set.len()).filter(|b| sub & (1 << b) == 0).map(|b| set[b].clone()).collect();
            let conf = c as f64 / count(&ante) as f64;
            if conf >= min_c {
                rules.insert((ante.iter().map(|s| s.to_string()).collect(), cons, support.to_bits(), conf.to_bits()));
            }
        }
    }
    (itemsets, rules)
}

fn mining_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut total_rules = 0;
    for case in 0..100 {
        let n_items = rng.gen_range(1..=6);
        let n_tx = rng.gen_range(1..=50);
        let txs: Vec<Transaction> = (0..n_tx)
            .map(|_| Transaction::new((0..n_items).filter(|_| rng.gen_bool(0.5)).map(|i| format!("i{i}"))))
            .collect();
        let min_s = [0.05, 0.1, 0.2, 0.3, 0.5][rng.gen_range(0..5)];
        let min_c = [0.3, 0.5, 0.75, 0.9, 1.0][rng.gen_range(0..5)];
        let got = apriori(&txs, min_s, min_c).map_err(|e| format!("case {case}: {e}"))?;
        let (want_sets, want_rules) = brute_force(&txs, min_s, min_c);
        let got_sets: BTreeSet<_> = got
            .itemsets
            .iter()
            .map(|s| (s.items.iter().cloned().collect::<Vec<_>>(), s.count, s.support.to_bits()))
            .collect();
        let got_rules: BTreeSet<RuleKey> = got
            .rules
            .iter()
            .map(|r| {
                (
                    r.antecedent.iter().cloned().collect(),
                    r.consequent.iter().cloned().collect(),
                    r.support.to_bits(),
                    r.confidence.to_bits(),
                )
            })
            .collect();
        ensure(got_sets == want_sets, || format!("case {case}: itemsets differ"))?;
        ensure(got_rules == want_rules && got_rules.len() == got.rules.len(), || format!("case {case}: rules differ"))?;
        total_rules += want_rules.len();
    }
    Ok(format!("100 instances, {total_rules} rules, exact"))
}

fn correlation_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(3..60);
        let binary: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        if binary.iter().all(|b| *b) || binary.iter().all(|b| !*b) {
            continue;
        }
        let x: Vec<f64> = binary.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let a = point_biserial(&binary, &scores).map_err(|e| e.to_string())?.coefficient;
        let b = pearson(&x, &scores).map_err(|e| e.to_string())?.coefficient;
        ensure((a - b).abs() <= 1e-12, || format!("vector {checked}: {a} vs {b}"))?;
        checked += 1;
    }
    let undefined = |r: Result<_, MetricError>| matches!(r, Err(MetricError::UndefinedCorrelation(_)));
    ensure(undefined(point_biserial(&[true, true, true], &[1.0, 2.0, 3.0])), || "single group accepted".into())?;
    ensure(undefined(point_biserial(&[true, false, true], &[2.0, 2.0, 2.0])), || "zero variance accepted".into())?;
    ensure(undefined(point_biserial(&[true, false], &[1.0, 2.0])), || "n < 3 accepted".into())?;
    ensure(
        matches!(point_biserial(&[true, false, true], &[1.0, 2.0]), Err(MetricError::LengthMismatch(3, 2))),
        || "length mismatch accepted".into(),
    )?;
    Ok("1000 vectors within 1e-12, 4 degenerate inputs rejected".into())
}

fn table_replication() -> Result<String, String> {
    let mut table = ResultTable::fixture("xquad").unwrap();
    table.merge(ResultTable::fixture("indicqa").unwrap()).map_err(|e| e.to_string())?;
    let expected = [
        ("de", 0.85),
        ("hi", 0.82),
        ("ar", 0.74),
        ("vi", 0.73),
        ("ro", 0.69),
        ("ru", 0.69),
        ("el", 0.69),
        ("bn", 0.68),
        ("as", 0.56),
        ("te", 0.53),
        ("ml", 0.49),
    ];
    for (lang, score) in expected {
        let (_, got) = top_configuration(&table, TaskKind::Qa, lang, "gpt").map_err(|e| format!("{lang}: {e}"))?;
        ensure(got == score, || format!("{lang}: top {got} vs {score}"))?;
    }
    let baselines = Baselines::standard(TaskKind::Qa);
    let de = improvement_over_baselines(&table, TaskKind::Qa, "de", "gpt", &baselines).map_err(|e| e.to_string())?;
    ensure((de.vs_direct - 18.0).abs() <= 1.0, || format!("de vs direct {:+.2}%", de.vs_direct))?;
    ensure((de.vs_pretranslate - 9.0).abs() <= 1.0, || format!("de vs pre-translation {:+.2}%", de.vs_pretranslate))?;
    let mut others = Vec::new();
    for (lang, _) in &expected[1..] {
        match improvement_over_baselines(&table, TaskKind::Qa, lang, "gpt", &baselines) {
            Ok(i) => others.push(format!("{lang} {:+.0}/{:+.0}", i.vs_direct, i.vs_pretranslate)),
            Err(_) => others.push(format!("{lang} undefined")),
        }
    }
    Ok(format!(
        "11 tops exact; de {:+.1}%/{:+.1}%; others: {}",
        de.vs_direct,
        de.vs_pretranslate,
        others.join(", ")
    ))
}

fn binning() -> Result<String, String> {
    let configs = enumerate_configurations(TaskKind::Qa);
    let mut table = ResultTable::new();
    for (i, config) in configs.iter().take(10).enumerate() {
        table
            .push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: *config,
                score: (i + 1) as f64,
            })
            .map_err(|e| e.to_string())?;
    }
    let partition = |rows: &[selprompt_core::analysis::BinnedRow]| -> Vec<(f64, ScoreBin)> {
        rows.iter().map(|b| (b.row.score, b.bin)).collect()
    };
    let first = partition(&bin_scores(&table, 30, 60).map_err(|e| e.to_string())?);
    let second = partition(&bin_scores(&table, 30, 60).map_err(|e| e.to_string())?);
    let expected: Vec<(f64, ScoreBin)> = (1..=10)
        .map(|s| {
            let bin = match s {
                1 | 2 => ScoreBin::Low,
                3..=5 => ScoreBin::Medium,
                _ => ScoreBin::High,
            };
            (s as f64, bin)
        })
        .collect();
    ensure(first == expected, || format!("partition {first:?}"))?;
    ensure(first == second, || "not deterministic".into())?;
    Ok("low {1,2}, medium {3,4,5}, high {6..10}".into())
}

fn flip(lang: ComponentLang) -> ComponentLang {
    match lang {
        ComponentLang::Source => ComponentLang::English,
        ComponentLang::English => ComponentLang::Source,
    }
}

fn swapped(config: &Configuration, component: Component) -> Configuration {
    let (mut i, mut x, mut e, mut o) = (config.instruction(), config.context(), config.examples(), config.output());
    match component {
        Component::Instruction => i = flip(i),
        Component::Context => x = flip(x),
        Component::Examples => {
            e = match e {
                ExamplesMode::Source => ExamplesMode::English,
                ExamplesMode::English => ExamplesMode::Source,
                ExamplesMode::None => ExamplesMode::None,
            }
        }
        Component::Output => o = flip(o),
    }
    Configuration::new(config.task(), i, x, e, o).unwrap()
}

fn performance_gap_check() -> Result<String, String> {
    let offsets = [
        (Component::Instruction, 0.125),
        (Component::Context, -0.25),
        (Component::Examples, 0.0625),
        (Component::Output, 0.5),
    ];
    let score = |c: &Configuration| -> f64 {
        let mut s = 1.0;
        for (component, off) in offsets {
            let english = match component {
                Component::Examples => c.examples() == ExamplesMode::English,
                other => c.component(other) == Some(ComponentLang::English),
            };
            if english {
                s += off;
            }
        }
        if c.is_zero_shot() {
            s += 0.03125;
        }
        s
    };
    let build = |f: &dyn Fn(&Configuration) -> Configuration| -> ResultTable {
        let mut t = ResultTable::new();
        for c in enumerate_configurations(TaskKind::Qa) {
            t.push(ResultRow {
                model: "m".into(),
                language: "de".into(),
                config: f(&c),
                score: score(&c),
            })
            .unwrap();
        }
        t
    };
    let table = build(&|c| *c);
    for (component, off) in offsets {
        let g = performance_gap(&table, component).map_err(|e| e.to_string())?;
        ensure(g.mean_gap == off, || format!("{}: gap {} vs planted {off}", component.as_str(), g.mean_gap))?;
        ensure(g.k == 8, || format!("{}: k = {}", component.as_str(), g.k))?;
        let swapped_table = build(&|c| swapped(c, component));
        let s = performance_gap(&swapped_table, component).map_err(|e| e.to_string())?;
        ensure(s.mean_gap == -g.mean_gap, || format!("{}: swapped gap {}", component.as_str(), s.mean_gap))?;
    }
    Ok("planted offsets recovered exactly, k = 8, swap negates".into())
}

fn cli(args: &[&str]) -> (i32, Vec<u8>, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["selprompt"];
    full.extend_from_slice(args);
    let code = selprompt_cli::run(full, &mut out, &mut err);
    (code, out, String::from_utf8_lossy(&err).into_owned())
}

fn write_dataset(path: &Path, n: usize) {
    let mut body = String::new();
    for i in 0..n {
        let inst = TaskInstance {
            id: format!("q{i}"),
            language: "de".into(),
            payload: Payload::Qa {
                question: format!("Wo liegt Ort {i}?"),
                context: format!("Ort {i} liegt in Bayern."),
                answers: vec![format!("Bayern {i}")],
            },
        };
        body.push_str(&serde_json::to_string(&inst.to_record()).unwrap());
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}

fn end_to_end() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("qa.jsonl");
    write_dataset(&data, 8);
    let sweep = |out: &Path, workers: &str, extra: &[&str]| {
        let mut args = vec![
            "sweep", "--task", "qa", "--lang", "de", "--model", "scripted-echo", "--provider", "scripted", "--translator",
            "mock", "--config", "SSZS,EESE,SEES", "--seed", "5",
        ];
        args.extend_from_slice(&["--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
        args.extend_from_slice(extra);
        cli(&args)
    };
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, workers) in [(&a, "4"), (&b, "1")] {
        let (code, _, err) = sweep(dir, workers, &[]);
        ensure(code == 0, || format!("sweep exited {code}: {err}"))?;
    }
    for f in ["records.jsonl", "results.csv", "manifest.json", "summary.json"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    let (code, _, err) = sweep(&c, "2", &["--stop-after", "5"]);
    ensure(code == 0, || format!("interrupted sweep exited {code}: {err}"))?;
    let partial = load_run(&c).map_err(|e| e.to_string())?.1.len();
    ensure(partial == 5, || format!("interrupted run wrote {partial} records"))?;
    let (code, _, err) = sweep(&c, "2", &[]);
    ensure(code == 0, || format!("resumed sweep exited {code}: {err}"))?;
    let keys = |d: &Path| -> BTreeSet<String> { load_run(d).unwrap().1.iter().map(|r| r.key()).collect() };
    let (full, resumed) = (keys(&a), keys(&c));
    ensure(full == resumed, || "resumed key set differs".into())?;
    Ok(format!("3 configs x 8 instances byte-identical; resume {} keys match", full.len()))
}

fn api_body(service: Arc<Service>, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    runtime.block_on(async {
        let req = Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = selprompt_cli::server::router(service).oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    })
}

fn recommender() -> Result<String, String> {
    let rules = RuleTable::bundled();
    ensure(rules.len() == 32, || format!("{} bundled rows", rules.len()))?;
    let registry = LanguageRegistry::bundled();
    let class_c: Vec<String> = registry
        .iter()
        .filter(|l| l.resource_class == ResourceClass::C)
        .map(|l| l.code.clone())
        .collect();
    ensure(!class_c.is_empty(), || "no class C language".into())?;
    for lang in &class_c {
        let rec = recommend(TaskKind::Qa, lang, "gpt-3.5-turbo", &registry, &rules).map_err(|e| e.to_string())?;
        let c = rec.config;
        ensure(
            c.context() == ComponentLang::Source
                && c.examples() == ExamplesMode::Source
                && c.output() == ComponentLang::Source
                && rec.resolved_neutrals == vec![Component::Instruction],
            || format!("{lang}: {} neutrals {:?}", c.code(), rec.resolved_neutrals),
        )?;
    }
    let service = Arc::new(Service::default());
    let lang = class_c[0].as_str();
    let (code, cli_out, err) = cli(&["recommend", "--task", "qa", "--lang", lang, "--model", "gpt-3.5-turbo", "--format", "structured"]);
    ensure(code == 0, || format!("cli exited {code}: {err}"))?;
    let body = format!(r#"{{"task":"qa","language":"{lang}","model":"gpt-3.5-turbo"}}"#);
    let (status, api_out) = api_body(service, "/v1/recommend", &body);
    ensure(status == StatusCode::OK, || format!("api status {status}"))?;
    ensure(cli_out == api_out, || {
        format!("cli {:?} vs api {:?}", String::from_utf8_lossy(&cli_out), String::from_utf8_lossy(&api_out))
    })?;
    Ok(format!("32 rows; {} class C languages give SSSS with instruction neutral; cli == api", class_c.len()))
}

fn main() {
    let criteria = [
        Criterion {
            name: "configuration space",
            limit: Some(Duration::from_secs(1)),
            check: config_space,
        },
        Criterion {
            name: "metric oracles",
            limit: Some(Duration::from_secs(10)),
            check: metric_oracles,
        },
        Criterion {
            name: "mining oracle",
            limit: Some(Duration::from_secs(30)),
            check: mining_oracle,
        },
        Criterion {
            name: "correlation oracle",
            limit: Some(Duration::from_secs(5)),
            check: correlation_oracle,
        },
        Criterion {
            name: "result-table replication",
            limit: Some(Duration::from_secs(5)),
            check: table_replication,
        },
        Criterion {
            name: "binning",
            limit: None,
            check: binning,
        },
        Criterion {
            name: "performance gap",
            limit: None,
            check: performance_gap_check,
        },
        Criterion {
            name: "end-to-end determinism",
            limit: Some(Duration::from_secs(60)),
            check: end_to_end,
        },
        Criterion {
            name: "recommender",
            limit: None,
            check: recommender,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<26} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<26} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
