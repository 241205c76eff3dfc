use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use selprompt_core::analysis::{
    apriori, bin_scores, performance_gap, top_configuration, ResultRow, ResultTable, ScoreBin, Transaction,
};
use selprompt_core::biose::{spans_to_tags, tags_to_spans, validate, BioseTag, EntitySpan, EntityType};
use selprompt_core::config_space::{
    classify_language, enumerate_configurations, parse_config_code, Component, Configuration,
    LanguageRegistry, ResourceClass, TaskKind,
};
use selprompt_core::corpus::{sample, Payload, SamplePolicy, TaskInstance};
use selprompt_core::metrics::{entity_f1, pearson, point_biserial, rouge, RougeVariant, Tokenizer};
use selprompt_core::postproc::{normalize_qa, parse_ner, project_biose};
use selprompt_core::recommend::{recommend_for_class, RuleTable};

fn entity_type() -> impl Strategy<Value = EntityType> {
    prop_oneof![Just(EntityType::Per), Just(EntityType::Org), Just(EntityType::Loc)]
}

/// Non-overlapping spans over `len` tokens.
fn spans(len: usize) -> impl Strategy<Value = Vec<EntitySpan>> {
    proptest::collection::vec((0..len, 1usize..4, entity_type()), 0..5).prop_map(move |raw| {
        let mut taken = vec![false; len];
        let mut out = Vec::new();
        for (start, width, ty) in raw {
            let end = (start + width - 1).min(len - 1);
            if (start..=end).all(|i| !taken[i]) {
                (start..=end).for_each(|i| taken[i] = true);
                out.push(EntitySpan {
                    entity_type: ty,
                    start,
                    end,
                });
            }
        }
        out.sort_by_key(|s| s.start);
        out
    })
}

fn full_table(scores: &[f64]) -> ResultTable {
    let mut t = ResultTable::new();
    for (c, s) in enumerate_configurations(TaskKind::Qa).into_iter().zip(scores) {
        t.push(ResultRow {
            model: "m".into(),
            language: "de".into(),
            config: c,
            score: *s,
        })
        .unwrap();
    }
    t
}

fn brute_force_rules(txs: &[Transaction], min_s: f64, min_c: f64) -> BTreeSet<(Vec<String>, Vec<String>, u64, u64)> {
    let items: Vec<String> = txs.iter().flat_map(|t| t.items.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let n = txs.len();
    let count = |set: &[&String]| txs.iter().filter(|t| set.iter().all(|i| t.items.contains(*i))).count();
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << items.len()) {
        let set: Vec<&String> = (0..items.len()).filter(|b| mask & (1 << b) != 0).map(|b| &items[b]).collect();
        let c = count(&set);
        if (c as f64 / n as f64) < min_s || set.len() < 2 {
            continue;
        }
        for sub in 1u32..(1 << set.len()) - 1 {
            let ante: Vec<&String> = (0..set.len()).filter(|b| sub & (1 << b) != 0).map(|b| set[b]).collect();
            let cons: Vec<&String> = (0..set.len()).filter(|b| sub & (1 << b) == 0).map(|b| set[b]).collect();
            let conf = c as f64 / count(&ante) as f64;
            if conf >= min_c {
                out.insert((
                    ante.iter().map(|s| s.to_string()).collect(),
                    cons.iter().map(|s| s.to_string()).collect(),
                    (c as f64 / n as f64).to_bits(),
                    conf.to_bits(),
                ));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalize_qa_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize_qa(&s);
        prop_assert_eq!(normalize_qa(&once), once);
    }

    #[test]
    fn biose_round_trip((len, sp) in (1usize..12).prop_flat_map(|len| (Just(len), spans(len)))) {
        let tags = spans_to_tags(&sp, len).unwrap();
        prop_assert!(validate(&tags).is_ok());
        prop_assert_eq!(tags_to_spans(&tags).unwrap(), sp);
    }

    #[test]
    fn parse_ner_never_panics(s in "\\PC{0,80}") {
        let _ = parse_ner(&s);
    }

    #[test]
    fn parse_ner_never_panics_on_bracketed(s in "[\\[\\]()'\", :A-Z a-z]{0,60}") {
        let _ = parse_ner(&s);
    }

    #[test]
    fn projection_is_well_formed(tokens in proptest::collection::vec("[a-cA-C]{1,2}", 0..10),
                                 ents in proptest::collection::vec((entity_type(), "[a-c]{1,2}( [a-c]{1,2})?"), 0..4)) {
        let p = project_biose(&tokens, &ents);
        prop_assert_eq!(p.tags.len(), tokens.len());
        prop_assert!(validate(&p.tags).is_ok());
    }

    #[test]
    fn classification_is_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        prop_assert!(classify_language(hi).unwrap() <= classify_language(lo).unwrap());
    }

    #[test]
    fn sample_is_an_ordered_subset(n in 1usize..60, max in 1usize..30, budget in 1usize..40, seed in any::<u64>()) {
        let items: Vec<TaskInstance> = (0..n).map(|i| TaskInstance {
            id: format!("{i}"),
            language: "de".into(),
            payload: Payload::Sum { document: "x".repeat(i % 37 + 1), reference_summary: "y".into() },
        }).collect();
        let policy = SamplePolicy::new(max, budget).unwrap();
        let picked = sample(&items, &policy, seed);
        let eligible = items.iter().filter(|i| i.context_units() <= budget).count();
        prop_assert_eq!(picked.len(), eligible.min(max));
        let idx: Vec<usize> = picked.iter().map(|p| p.id.parse().unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(picked.iter().all(|p| p.context_units() <= budget));
        prop_assert_eq!(sample(&items, &policy, seed), picked);
    }

    #[test]
    fn rouge1_is_symmetric(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
        let ab = rouge(&a, &b, RougeVariant::One, Tokenizer::Whitespace).value;
        let ba = rouge(&b, &a, RougeVariant::One, Tokenizer::Whitespace).value;
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn rouge_l_of_self_is_one(a in "[a-z]{1,5}( [a-z]{1,5}){0,8}") {
        prop_assert_eq!(rouge(&a, &a, RougeVariant::L, Tokenizer::Whitespace).value, 1.0);
    }

    #[test]
    fn entity_f1_ignores_o_padding((len, p, g) in (1usize..10).prop_flat_map(|len| (Just(len), spans(len), spans(len))),
                                   pad in 1usize..5, at_end in any::<bool>()) {
        let pt = spans_to_tags(&p, len).unwrap();
        let gt = spans_to_tags(&g, len).unwrap();
        let base = entity_f1(&pt, &gt).unwrap().value;
        let padded = |tags: &[BioseTag]| {
            let mut v = tags.to_vec();
            if at_end { v.extend(std::iter::repeat(BioseTag::O).take(pad)); }
            else { v.splice(0..0, std::iter::repeat(BioseTag::O).take(pad)); }
            v
        };
        prop_assert_eq!(entity_f1(&padded(&pt), &padded(&gt)).unwrap().value, base);
    }

    #[test]
    fn point_biserial_equals_pearson(pairs in proptest::collection::vec((any::<bool>(), -10.0f64..10.0), 3..40)) {
        let b: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let x: Vec<f64> = b.iter().map(|v| f64::from(u8::from(*v))).collect();
        match (point_biserial(&b, &s), pearson(&x, &s)) {
            (Ok(pb), Ok(pe)) => {
                prop_assert!((pb.coefficient - pe.coefficient).abs() < 1e-12);
                prop_assert!((pb.p_value - pe.p_value).abs() < 1e-9);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "disagree: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn apriori_matches_brute_force_and_is_closed(
        txs in proptest::collection::vec(proptest::collection::btree_set(0u8..6, 0..6), 1..30),
        s in 1u32..10, c in 1u32..10,
    ) {
        let txs: Vec<Transaction> = txs.into_iter().map(|t| Transaction::new(t.into_iter().map(|i| format!("i{i}")))).collect();
        let (min_s, min_c) = (s as f64 / 10.0, c as f64 / 10.0);
        let res = apriori(&txs, min_s, min_c).unwrap();
        let got: BTreeSet<_> = res.rules.iter().map(|r| (
            r.antecedent.iter().cloned().collect::<Vec<_>>(),
            r.consequent.iter().cloned().collect::<Vec<_>>(),
            r.support.to_bits(),
            r.confidence.to_bits(),
        )).collect();
        prop_assert_eq!(got, brute_force_rules(&txs, min_s, min_c));
        let frequent: BTreeSet<&BTreeSet<String>> = res.itemsets.iter().map(|f| &f.items).collect();
        for f in &res.itemsets {
            for drop in &f.items {
                let mut sub = f.items.clone();
                sub.remove(drop);
                if !sub.is_empty() {
                    prop_assert!(frequent.contains(&sub));
                }
            }
        }
    }

    #[test]
    fn top_configuration_is_affine_invariant(scores in proptest::collection::vec(0.0f64..1.0, 24), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let t = full_table(&scores);
        let scaled: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let (c1, _) = top_configuration(&t, TaskKind::Qa, "de", "m").unwrap();
        let (c2, _) = top_configuration(&full_table(&scaled), TaskKind::Qa, "de", "m").unwrap();
        prop_assert_eq!(c1, c2);
    }

    #[test]
    fn gap_negates_under_language_swap(scores in proptest::collection::vec(0.0f64..1.0, 24), ci in 0usize..4) {
        let component = Component::ALL[ci];
        let t = full_table(&scores);
        let by_code: BTreeMap<String, f64> = enumerate_configurations(TaskKind::Qa).iter().map(|c| c.code()).zip(scores.iter().copied()).collect();
        let swapped_scores: Vec<f64> = enumerate_configurations(TaskKind::Qa).iter().map(|c| {
            let mut code: Vec<char> = c.code().chars().collect();
            let slot = ci;
            code[slot] = match code[slot] { 'S' => 'E', 'E' => 'S', z => z };
            by_code[&code.into_iter().collect::<String>()]
        }).collect();
        let g = performance_gap(&t, component).unwrap();
        let h = performance_gap(&full_table(&swapped_scores), component).unwrap();
        prop_assert_eq!(g.k, h.k);
        prop_assert!((g.mean_gap + h.mean_gap).abs() < 1e-12);
    }

    #[test]
    fn bins_partition_and_respect_order(scores in proptest::collection::vec(0.0f64..1.0, 24)) {
        let binned = bin_scores(&full_table(&scores), 30, 60).unwrap();
        prop_assert_eq!(binned.len(), 24);
        for x in &binned {
            for y in &binned {
                if x.row.score < y.row.score {
                    prop_assert!(x.bin <= y.bin);
                }
            }
        }
        prop_assert!(binned.iter().any(|b| b.bin == ScoreBin::High));
    }
}

#[test]
fn parse_format_identity() {
    for task in TaskKind::ALL {
        for c in enumerate_configurations(task) {
            assert_eq!(parse_config_code(&c.code(), task).unwrap(), c);
        }
    }
}

#[test]
fn recommendations_are_concrete_and_every_row_reachable() {
    let table = RuleTable::bundled();
    let mut reached = BTreeSet::new();
    for row in table.rows() {
        for class in [ResourceClass::A, ResourceClass::B, ResourceClass::C, ResourceClass::D] {
            if let Ok(rec) = recommend_for_class(row.task, class, &row.model_family, &table) {
                let c: Configuration = rec.config;
                assert!(c.code().chars().all(|l| matches!(l, 'S' | 'E' | 'Z')));
                if c.task() == TaskKind::Nli {
                    assert_eq!(c.output(), c.instruction());
                }
                reached.insert(rec.row.key());
            }
        }
    }
    assert_eq!(reached.len(), table.len());
    let reg = LanguageRegistry::bundled();
    assert!(reg.iter().all(|l| l.token_share.map_or(true, |p| classify_language(p).unwrap() == l.resource_class)));
}
