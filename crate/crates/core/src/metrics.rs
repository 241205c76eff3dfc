//! Scoring: token F1, entity F1, accuracy, ROUGE, BLEU, chrF, and Pearson /
//! point-biserial correlation with two-sided t-test p-values.

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::biose::{self, BioseTag, BioseError};

const TOKENIZER_POLICY: &str = include_str!("../data/tokenizers.tsv");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("ill-formed label sequence: {0}")]
    Labels(#[from] BioseError),
    #[error("external scores: {0}")]
    External(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TokenF1,
    EntityF1,
    Accuracy,
    Rouge1,
    Rouge2,
    RougeL,
    Bleu,
    ChrF,
}

/// A score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub metric: Metric,
}

impl Score {
    pub fn new(metric: Metric, value: f64) -> Self {
        Score { value, metric }
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision == 0.0 || recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn counts<T: Eq + Hash + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

fn clipped_overlap<T: Eq + Hash>(a: &HashMap<T, usize>, b: &HashMap<T, usize>) -> usize {
    a.iter().map(|(k, &n)| n.min(*b.get(k).unwrap_or(&0))).sum()
}

/// Word segmentation policy for overlap metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    Whitespace,
    /// Every non-space character is a token.
    Characters,
    /// Whitespace split, with runs of Han/Kana/Thai further split into characters.
    Mixed,
}

fn unspaced(c: char) -> bool {
    let u = c as u32;
    (0x0E00..=0x0E7F).contains(&u)
        || (0x3040..=0x30FF).contains(&u)
        || (0x3400..=0x4DBF).contains(&u)
        || (0x4E00..=0x9FFF).contains(&u)
        || (0xF900..=0xFAFF).contains(&u)
}

impl Tokenizer {
    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().collect(),
            Tokenizer::Characters => text
                .char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
            Tokenizer::Mixed => {
                let mut out = Vec::new();
                for word in text.split_whitespace() {
                    let mut start = None;
                    for (i, c) in word.char_indices() {
                        if unspaced(c) {
                            if let Some(s) = start.take() {
                                out.push(&word[s..i]);
                            }
                            out.push(&word[i..i + c.len_utf8()]);
                        } else if start.is_none() {
                            start = Some(i);
                        }
                    }
                    if let Some(s) = start {
                        out.push(&word[s..]);
                    }
                }
                out
            }
        }
    }
}

impl std::str::FromStr for Tokenizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "whitespace" => Ok(Tokenizer::Whitespace),
            "characters" => Ok(Tokenizer::Characters),
            "mixed" => Ok(Tokenizer::Mixed),
            other => Err(format!("unknown tokenizer policy {other:?}")),
        }
    }
}

/// Language → tokenizer map; unlisted languages use whitespace.
#[derive(Debug, Clone, Default)]
pub struct TokenizerPolicy {
    overrides: HashMap<String, Tokenizer>,
}

impl TokenizerPolicy {
    pub fn bundled() -> &'static TokenizerPolicy {
        static P: OnceLock<TokenizerPolicy> = OnceLock::new();
        P.get_or_init(|| Self::parse(TOKENIZER_POLICY).expect("bundled tokenizer policy is valid"))
    }

    /// Tab- or space-separated `language policy` lines; `#` comments.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut overrides = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(lang), Some(policy)) = (cols.next(), cols.next()) else {
                return Err(format!("line {}: expected `language policy`", i + 1));
            };
            overrides.insert(lang.to_string(), policy.parse().map_err(|e| format!("line {}: {e}", i + 1))?);
        }
        Ok(TokenizerPolicy { overrides })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
    }

    pub fn for_language(&self, lang: &str) -> Tokenizer {
        self.overrides.get(lang).copied().unwrap_or(Tokenizer::Whitespace)
    }
}

/// Bag-of-tokens F1 against the best-matching gold. Empty prediction and
/// empty gold score 1; exactly one empty scores 0.
pub fn token_f1_with(pred: &str, golds: &[String], tokenizer: Tokenizer) -> Score {
    let p = tokenizer.tokenize(pred);
    let best = golds
        .iter()
        .map(|g| {
            let g = tokenizer.tokenize(g);
            match (p.is_empty(), g.is_empty()) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.0,
                _ => {
                    let common = clipped_overlap(&counts(p.iter().copied()), &counts(g.iter().copied()));
                    f1(common as f64 / p.len() as f64, common as f64 / g.len() as f64)
                }
            }
        })
        .fold(0.0, f64::max);
    Score::new(Metric::TokenF1, best)
}

pub fn token_f1(pred: &str, golds: &[String]) -> Score {
    token_f1_with(pred, golds, Tokenizer::Whitespace)
}

/// Micro F1 over exact (type, start, end) span matches.
pub fn entity_f1(pred: &[BioseTag], gold: &[BioseTag]) -> Result<Score, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    let p: std::collections::HashSet<_> = biose::tags_to_spans(pred)?.into_iter().collect();
    let g: std::collections::HashSet<_> = biose::tags_to_spans(gold)?.into_iter().collect();
    let value = match (p.is_empty(), g.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let tp = p.intersection(&g).count() as f64;
            f1(tp / p.len() as f64, tp / g.len() as f64)
        }
    };
    Ok(Score::new(Metric::EntityF1, value))
}

pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<Score, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let hits = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(Score::new(Metric::Accuracy, hits as f64 / gold.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "L")]
    L,
}

fn ngrams<'a, 'b>(tokens: &'b [&'a str], n: usize) -> Vec<&'b [&'a str]> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect()
}

fn ngrams_of<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    counts(if tokens.len() < n { Vec::new() } else { (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect() })
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE F-measure over lowercased tokens. When neither side has any n-gram
/// of the requested order, identical token sequences score 1 and others 0.
pub fn rouge(pred: &str, reference: &str, variant: RougeVariant, tokenizer: Tokenizer) -> Score {
    let (pl, rl) = (pred.to_lowercase(), reference.to_lowercase());
    let p = tokenizer.tokenize(&pl);
    let r = tokenizer.tokenize(&rl);
    let (metric, overlap, np, nr) = match variant {
        RougeVariant::One | RougeVariant::Two => {
            let n = if variant == RougeVariant::One { 1 } else { 2 };
            let (pc, rc) = (ngrams_of(&p, n), ngrams_of(&r, n));
            let metric = if n == 1 { Metric::Rouge1 } else { Metric::Rouge2 };
            (metric, clipped_overlap(&pc, &rc), pc.values().sum::<usize>(), rc.values().sum::<usize>())
        }
        RougeVariant::L => (Metric::RougeL, lcs_len(&p, &r), p.len(), r.len()),
    };
    if np == 0 && nr == 0 {
        return Score::new(metric, if p == r { 1.0 } else { 0.0 });
    }
    if np == 0 || nr == 0 {
        return Score::new(metric, 0.0);
    }
    Score::new(metric, f1(overlap as f64 / np as f64, overlap as f64 / nr as f64))
}

struct BleuStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

fn bleu_stats(cands: &[&str], refs: &[&str], max_n: usize, tokenizer: Tokenizer) -> BleuStats {
    let mut s = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        cand_len: 0,
        ref_len: 0,
    };
    for (c, r) in cands.iter().zip(refs) {
        let ct = tokenizer.tokenize(c);
        let rt = tokenizer.tokenize(r);
        s.cand_len += ct.len();
        s.ref_len += rt.len();
        for n in 1..=max_n {
            let cc = counts(ngrams(&ct, n));
            let rc = counts(ngrams(&rt, n));
            s.matches[n - 1] += clipped_overlap(&cc, &rc);
            s.totals[n - 1] += cc.values().sum::<usize>();
        }
    }
    s
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Unsmoothed corpus BLEU with uniform weights and brevity penalty.
pub fn bleu_with(cands: &[&str], refs: &[&str], max_n: usize, tokenizer: Tokenizer) -> Result<Score, MetricError> {
    if cands.len() != refs.len() {
        return Err(MetricError::LengthMismatch(cands.len(), refs.len()));
    }
    if cands.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let s = bleu_stats(cands, refs, max_n, tokenizer);
    if s.cand_len == 0 || s.matches.iter().any(|&m| m == 0) {
        return Ok(Score::new(Metric::Bleu, 0.0));
    }
    let log_mean = (0..max_n)
        .map(|i| (s.matches[i] as f64 / s.totals[i] as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    Ok(Score::new(Metric::Bleu, brevity_penalty(s.cand_len, s.ref_len) * log_mean.exp()))
}

pub fn bleu(cands: &[&str], refs: &[&str]) -> Result<Score, MetricError> {
    bleu_with(cands, refs, 4, Tokenizer::Whitespace)
}

/// Sentence BLEU with add-one smoothing on the n > 1 precisions.
pub fn sentence_bleu(cand: &str, reference: &str, max_n: usize, tokenizer: Tokenizer) -> Score {
    let s = bleu_stats(&[cand], &[reference], max_n, tokenizer);
    if s.cand_len == 0 || s.matches[0] == 0 {
        return Score::new(Metric::Bleu, 0.0);
    }
    let log_mean = (0..max_n)
        .map(|i| {
            let (m, t) = if i == 0 {
                (s.matches[0] as f64, s.totals[0] as f64)
            } else {
                (s.matches[i] as f64 + 1.0, s.totals[i] as f64 + 1.0)
            };
            (m / t).ln()
        })
        .sum::<f64>()
        / max_n as f64;
    Score::new(Metric::Bleu, brevity_penalty(s.cand_len, s.ref_len) * log_mean.exp())
}

/// Character n-gram F-score (orders 1..=6, beta 2, whitespace ignored):
/// F-beta per order where both sides have n-grams, averaged over those orders.
pub fn chrf(cand: &str, reference: &str) -> Score {
    const ORDER: usize = 6;
    const BETA2: f64 = 4.0;
    let c: Vec<char> = cand.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let mut total = 0.0;
    let mut effective = 0;
    for n in 1..=ORDER {
        if c.len() < n || r.len() < n {
            continue;
        }
        let cc = counts(c.windows(n));
        let rc = counts(r.windows(n));
        let m = clipped_overlap(&cc, &rc) as f64;
        let p = m / (c.len() - n + 1) as f64;
        let rec = m / (r.len() - n + 1) as f64;
        effective += 1;
        if p > 0.0 || rec > 0.0 {
            total += (1.0 + BETA2) * p * rec / (BETA2 * p + rec);
        }
    }
    let value = if effective == 0 { 0.0 } else { total / effective as f64 };
    Score::new(Metric::ChrF, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided p-value of a correlation coefficient under H0: rho = 0, using
/// Student's t with n - 2 degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let r2 = r * r;
    if r2 >= 1.0 {
        return 0.0;
    }
    let t2 = r2 * df / (1.0 - r2);
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Product-moment coefficient for n >= 2; variance must be non-zero.
pub fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::UndefinedCorrelation(format!("need at least 2 points, got {}", x.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, MetricError> {
    if x.len() == y.len() && x.len() < 3 {
        return Err(MetricError::UndefinedCorrelation(format!("need at least 3 points, got {}", x.len())));
    }
    let r = pearson_coefficient(x, y)?;
    Ok(CorrelationResult {
        coefficient: r,
        p_value: correlation_p_value(r, x.len()),
        n: x.len(),
    })
}

/// r_pb = (M1 - M0) / s_n * sqrt(p q), with s_n the population standard
/// deviation of all scores and p, q the group proportions.
pub fn point_biserial(binary: &[bool], scores: &[f64]) -> Result<CorrelationResult, MetricError> {
    if binary.len() != scores.len() {
        return Err(MetricError::LengthMismatch(binary.len(), scores.len()));
    }
    let n = scores.len();
    if n < 3 {
        return Err(MetricError::UndefinedCorrelation(format!("need at least 3 points, got {n}")));
    }
    let n1 = binary.iter().filter(|b| **b).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(MetricError::UndefinedCorrelation("only one group present".into()));
    }
    let m = mean(scores);
    let sn = (scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sn == 0.0 {
        return Err(MetricError::UndefinedCorrelation("zero variance".into()));
    }
    let (mut s1, mut s0) = (0.0, 0.0);
    for (b, s) in binary.iter().zip(scores) {
        if *b {
            s1 += s;
        } else {
            s0 += s;
        }
    }
    let (m1, m0) = (s1 / n1 as f64, s0 / n0 as f64);
    let (p, q) = (n1 as f64 / n as f64, n0 as f64 / n as f64);
    let r = ((m1 - m0) / sn * (p * q).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        coefficient: r,
        p_value: correlation_p_value(r, n),
        n,
    })
}

/// A precomputed per-pair score from an external scorer (e.g. a neural metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub language: String,
    pub metric: String,
    pub score: f64,
}

/// Reads `language,metric,score` CSV rows.
pub fn load_external_scores(path: &Path) -> Result<Vec<ExternalScore>, MetricError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| MetricError::External(e.to_string()))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| MetricError::External(e.to_string())))
        .collect()
}
