//! Synthetic workloads shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selprompt_core::analysis::{ResultRow, ResultTable, Transaction};
use selprompt_core::config_space::{enumerate_configurations, TaskKind};

const WORDS: [&str; 12] = ["the", "river", "city", "north", "bank", "old", "bridge", "market", "a", "of", "in", "stone"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sentence(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// `n` transactions over `attributes` two-valued attributes.
pub fn transactions(rng: &mut ChaCha8Rng, n: usize, attributes: usize) -> Vec<Transaction> {
    (0..n)
        .map(|_| Transaction::new((0..attributes).map(|a| format!("a{a}={}", rng.gen_range(0..2)))))
        .collect()
}

/// Complete QA table: every configuration for each model/language pair.
pub fn result_table(rng: &mut ChaCha8Rng, models: usize, languages: usize) -> ResultTable {
    let mut table = ResultTable::new();
    for m in 0..models {
        for l in 0..languages {
            for config in enumerate_configurations(TaskKind::Qa) {
                table
                    .push(ResultRow {
                        model: format!("m{m}"),
                        language: format!("l{l}"),
                        config,
                        score: rng.gen_range(0.0..1.0),
                    })
                    .expect("unique synthetic cell");
            }
        }
    }
    table
}
