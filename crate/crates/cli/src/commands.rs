use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use selprompt_core::analysis::{
    component_correlation, mine_rules, mt_quality_study, parse_similarity, performance_gap_scoped, render_correlations,
    render_gaps, render_rules, render_top_report, top_report, GapScope, InstanceScore, MtPair, ResultTable, RuleProfile,
};
use selprompt_core::api::{to_body, PromptRequest, RecommendRequest, Service};
use selprompt_core::config_space::{
    enumerate_configurations, parse_config_code, Component, LanguageInfo, LanguageRegistry, ResourceClass, TaskKind,
};
use selprompt_core::corpus::{convert, load_dataset, SamplePolicy, SourceFormat};
use selprompt_core::gateway::{Gateway, Limiter, ModelParams};
use selprompt_core::metrics::TokenizerPolicy;
use selprompt_core::postproc::{LabelLexicon, PrefixLexicon, ScriptDetector};
use selprompt_core::prompting::PromptTemplates;
use selprompt_core::recommend::{derive_rows_from_rules, Provenance, RuleTable};
use selprompt_core::runner::{load_run, sweep, SweepContext, SweepOptions, SweepSpec};
use serde_json::json;

use crate::args::*;
use crate::{providers, Failure};

fn task_arg(s: &str) -> Result<TaskKind> {
    s.parse::<TaskKind>().map_err(|e| Failure::usage("config-space", e).into())
}

/// Loads and merges every `--results` source, then applies the filters.
pub fn load_results(args: &ResultsArgs) -> Result<ResultTable> {
    let mut table = ResultTable::new();
    for src in &args.results {
        let part = if src == "fixture" {
            let mut all = ResultTable::new();
            for name in ResultTable::FIXTURES {
                all.merge(ResultTable::fixture(name).expect("bundled fixture"))?;
            }
            all
        } else if let Some(name) = src.strip_prefix("fixture:") {
            ResultTable::fixture(name)
                .ok_or_else(|| anyhow!("unknown fixture {name:?}; bundled: {}", ResultTable::FIXTURES.join(", ")))?
        } else {
            ResultTable::load(Path::new(src))?
        };
        table.merge(part)?;
    }
    let task = args.task.as_deref().map(task_arg).transpose()?;
    Ok(table.subset(task, args.model.as_deref(), args.lang.as_deref()))
}

fn tasks_in(table: &ResultTable) -> Vec<TaskKind> {
    table.keys().into_iter().map(|(t, _, _)| t).collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn sweep_cmd(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_arg(&a.task)?;
    let configs = if a.configs.trim() == "all" {
        enumerate_configurations(task)
    } else {
        a.configs
            .split(',')
            .map(|c| parse_config_code(c.trim(), task))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::usage("config-space", e))?
    };
    let instances = load_dataset(&a.dataset, task).map_err(|e| Failure::usage("corpus", e))?;
    let policy = SamplePolicy::new(a.max_instances, a.max_context).map_err(|e| Failure::usage("corpus", e))?;
    let params = ModelParams {
        temperature: a.temperature,
        max_output_units: a.max_output,
    };
    let store_dir = match (&a.replay_dir, a.provider) {
        (Some(d), _) => Some(d.clone()),
        (None, ModelProvider::Replay) => None,
        (None, _) => Some(a.out.join("completions")),
    };
    let setup = providers::model(a.provider, &a.model, params, a.base_url.as_deref(), store_dir)
        .map_err(|e| Failure::usage("gateway", e))?;
    let (translator, cache) = providers::translator(&a.translation).map_err(|e| Failure::usage("translation", e))?;
    let registry = LanguageRegistry::bundled();
    let ctx = SweepContext {
        gateway: Gateway::new(
            setup.model,
            setup.store,
            Arc::new(Limiter::new(a.max_in_flight, Duration::from_millis(a.min_interval_ms))),
        ),
        translator,
        cache,
        detector: Arc::new(ScriptDetector::from_registry(&registry)),
        templates: PromptTemplates::bundled().clone(),
        registry,
        labels: LabelLexicon::bundled().clone(),
        prefixes: PrefixLexicon::bundled().clone(),
        tokenizers: TokenizerPolicy::bundled().clone(),
    };
    let spec = SweepSpec {
        task,
        language: a.lang.clone(),
        instances,
        policy,
        seed: a.seed,
        shots: a.shots,
        configs,
    };
    let opts = SweepOptions {
        out_dir: a.out.clone(),
        workers: a.workers,
        stop_after: a.stop_after,
    };
    let summary = sweep(&spec, &ctx, &opts)?;
    match a.format {
        Format::Structured => out.write_all(to_body(&summary).as_bytes())?,
        Format::Text => {
            writeln!(
                out,
                "run {}: {}/{} cells ({} resumed){}",
                summary.run_id,
                summary.records,
                summary.total_cells,
                summary.resumed,
                if summary.complete { "" } else { ", incomplete" }
            )?;
            writeln!(out, "{:<6} {:>9} {:>6} {:>6} {:>8} {:>8}", "config", "attempted", "scored", "failed", "mean", "lang_ok")?;
            for c in &summary.per_config {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{:<6} {:>9} {:>6} {:>6} {:>8} {:>8}",
                    c.config_code,
                    c.attempted,
                    c.scored,
                    c.failed,
                    f(c.mean_score),
                    f(c.output_language_rate)
                )?;
            }
        }
    }
    Ok(())
}

pub fn analyze_cmd(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let table = load_results(&a.results)?;
    if table.is_empty() {
        bail!(Failure::usage("analysis", "no result rows after filtering"));
    }
    let mut top = Vec::new();
    for task in tasks_in(&table) {
        top.push((task, top_report(&table, task)));
    }
    let mut columns = Vec::new();
    for dir in &a.runs {
        let (manifest, records) = load_run(dir)?;
        let scores: Vec<InstanceScore> = records
            .iter()
            .filter_map(|r| {
                let score = r.score?;
                let config = parse_config_code(&r.config_code, manifest.task).ok()?;
                Some(InstanceScore {
                    config,
                    score: score.value,
                })
            })
            .collect();
        let cells: Vec<_> = Component::ALL
            .iter()
            .map(|&c| (c, component_correlation(&scores, c).map_err(|e| e.to_string())))
            .collect();
        columns.push((format!("{}/{}/{}", manifest.task, manifest.language, manifest.model), cells));
    }
    match a.format {
        Format::Structured => {
            let correlations: Vec<_> = columns
                .iter()
                .map(|(label, cells)| {
                    let cells: serde_json::Map<String, serde_json::Value> = cells
                        .iter()
                        .map(|(c, r)| {
                            let v = match r {
                                Ok(c) => json!(c),
                                Err(e) => json!({ "error": e }),
                            };
                            (c.as_str().to_string(), v)
                        })
                        .collect();
                    json!({ "label": label, "components": cells })
                })
                .collect();
            let top: Vec<_> = top.iter().map(|(t, rows)| json!({ "task": t, "rows": rows })).collect();
            out.write_all(to_body(&json!({ "top": top, "correlations": correlations })).as_bytes())?;
        }
        Format::Text => {
            for (task, rows) in &top {
                writeln!(out, "## {task}")?;
                out.write_all(render_top_report(rows).as_bytes())?;
            }
            if !columns.is_empty() {
                writeln!(out, "## correlations")?;
                out.write_all(render_correlations(&columns).as_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn mine_cmd(a: &MineArgs, out: &mut dyn Write) -> Result<()> {
    let table = load_results(&a.results)?;
    let profile = RuleProfile::by_name(&a.profile).map_err(|e| Failure::usage("analysis", e))?;
    let mined = mine_rules(&table, &LanguageRegistry::bundled(), &profile)?;
    let derived = if a.derive {
        Some(RuleTable::new(derive_rows_from_rules(&mined, &profile))?)
    } else {
        None
    };
    match a.format {
        Format::Structured => {
            let derived = derived.as_ref().map(|t| t.rows().to_vec());
            out.write_all(to_body(&json!({ "profile": profile, "mined": mined, "derived": derived })).as_bytes())?;
        }
        Format::Text => {
            out.write_all(render_rules(&mined).as_bytes())?;
            if let Some(t) = derived {
                writeln!(out, "## derived recommendations")?;
                out.write_all(t.to_csv().as_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn gap_cmd(a: &GapArgs, out: &mut dyn Write) -> Result<()> {
    let table = load_results(&a.results)?;
    let scope = match a.scope {
        GapScopeArg::FewShot => GapScope::FewShot,
        GapScopeArg::All => GapScope::All,
    };
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for c in Component::ALL {
        match performance_gap_scoped(&table, c, scope) {
            Ok(r) => reports.push(r),
            Err(e) => skipped.push((c, e.to_string())),
        }
    }
    if reports.is_empty() {
        bail!(Failure::usage("analysis", "no configuration pairs in the selected results"));
    }
    match a.format {
        Format::Structured => out.write_all(to_body(&reports).as_bytes())?,
        Format::Text => {
            out.write_all(render_gaps(&reports).as_bytes())?;
            for (c, why) in skipped {
                writeln!(out, "{:<12} skipped: {why}", c.as_str())?;
            }
        }
    }
    Ok(())
}

pub fn recommend_service(a: &RecommendArgs) -> Result<Service> {
    let mut service = Service::default();
    if let Some(path) = &a.rules {
        let loaded = RuleTable::load(path, Provenance::MinedFromResults).map_err(|e| Failure::usage("recommend", e))?;
        service.rules = service.rules.layered(&loaded);
    }
    if let Some(class) = &a.class {
        let class: ResourceClass = class.parse().map_err(|e| Failure::usage("config-space", e))?;
        match service.registry.get(&a.lang) {
            Some(info) if info.resource_class != class => bail!(Failure::usage(
                "config-space",
                format!("{} is registered as class {}, not {class}", a.lang, info.resource_class)
            )),
            Some(_) => {}
            None => service
                .registry
                .insert(LanguageInfo::with_class(&a.lang, &a.lang, "Zyyy", class))
                .map_err(|e| Failure::usage("config-space", e))?,
        }
    }
    Ok(service)
}

pub fn recommend_cmd(a: &RecommendArgs, out: &mut dyn Write) -> Result<()> {
    let service = recommend_service(a)?;
    let req = RecommendRequest {
        task: a.task.clone(),
        language: a.lang.clone(),
        model: a.model.clone(),
    };
    let resp = service.recommend(&req)?;
    match a.format {
        Format::Structured => out.write_all(to_body(&resp).as_bytes())?,
        Format::Text => {
            writeln!(out, "{}", resp.config_code)?;
            if !resp.resolved_neutrals.is_empty() {
                writeln!(out, "neutral, set to source: {}", resp.resolved_neutrals.join(", "))?;
            }
        }
    }
    Ok(())
}

pub fn gen_prompt_cmd(a: &GenPromptArgs, out: &mut dyn Write) -> Result<()> {
    let task = task_arg(&a.task)?;
    let input: serde_json::Value = serde_json::from_reader(BufReader::new(
        File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?,
    ))
    .map_err(|e| Failure::usage("surface", format!("{}: {e}", a.input.display())))?;
    let demos = match &a.demos {
        Some(path) => Some(
            load_dataset(path, task)
                .map_err(|e| Failure::usage("corpus", e))?
                .iter()
                .map(|d| d.to_record())
                .collect(),
        ),
        None => None,
    };
    let (translator, cache) = providers::translator(&a.translation).map_err(|e| Failure::usage("translation", e))?;
    let service = Service {
        translator,
        cache,
        ..Service::default()
    };
    let req = PromptRequest {
        task: a.task.clone(),
        config_code: a.config.clone(),
        language: a.lang.clone(),
        input,
        k: a.k,
        demos,
    };
    let resp = service.prompt(&req)?;
    match a.format {
        Format::Structured => out.write_all(to_body(&resp).as_bytes())?,
        Format::Text => writeln!(out, "{}", resp.prompt_text)?,
    }
    Ok(())
}

pub fn mt_quality_cmd(a: &MtQualityArgs, out: &mut dyn Write) -> Result<()> {
    let reader = BufReader::new(File::open(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: MtPair = serde_json::from_str(&line)
            .map_err(|e| Failure::usage("analysis", format!("{} line {}: {e}", a.pairs.display(), i + 1)))?;
        pairs.push(pair);
    }
    let similarity = parse_similarity(
        &std::fs::read_to_string(&a.similarity).with_context(|| format!("reading {}", a.similarity.display()))?,
    )?;
    let report = mt_quality_study(&pairs, &similarity, TokenizerPolicy::bundled())?;
    match a.format {
        Format::Structured => out.write_all(to_body(&report).as_bytes())?,
        Format::Text => {
            writeln!(out, "{:<6} {:>5} {:>10} {:>8} {:>8} {:>8}", "lang", "pairs", "similarity", "rouge1", "bleu", "chrf")?;
            for l in &report.per_language {
                writeln!(
                    out,
                    "{:<6} {:>5} {:>10.3} {:>8.4} {:>8.4} {:>8.4}",
                    l.language, l.pairs, l.similarity, l.rouge1, l.bleu, l.chrf
                )?;
            }
            let c = &report.similarity_correlation;
            writeln!(out, "pearson(similarity, rouge1) = {:+.3} (p = {:.4}, n = {})", c.coefficient, c.p_value, c.n)?;
        }
    }
    Ok(())
}

pub fn convert_cmd(a: &ConvertArgs, out: &mut dyn Write) -> Result<()> {
    let format: SourceFormat = a.from.parse().map_err(|e: String| Failure::usage("corpus", e))?;
    let file = File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let items = convert(format, BufReader::new(file), &a.lang)?;
    let mut body = String::new();
    for item in &items {
        body.push_str(&serde_json::to_string(&item.to_record())?);
        body.push('\n');
    }
    match &a.output {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {} {} records to {}", items.len(), format.task(), path.display())?;
        }
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}
