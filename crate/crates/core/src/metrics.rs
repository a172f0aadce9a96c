//! Corpus-level BLEU over token ids.
//!
//! Clipped n-gram matches and hypothesis n-gram totals are summed over all
//! segments before the precisions are formed. The brevity penalty is
//! `exp(min(0, 1 - r/h))` with `r` and `h` the summed reference and
//! hypothesis lengths. One reference per segment. An order is dropped from
//! the geometric mean only when the hypotheses have no n-grams of that order,
//! so identical inputs always score 100.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{LangPair, TestExample, TokenSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to numerator and denominator of every order above 1.
    AddOne,
}

impl Smoothing {
    pub fn as_str(self) -> &'static str {
        match self {
            Smoothing::None => "none",
            Smoothing::AddOne => "add_one",
        }
    }
}

impl FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Smoothing::None),
            "add_one" | "add-one" => Ok(Smoothing::AddOne),
            _ => Err(Error::invalid(format!("unknown smoothing `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::None,
        }
    }
}

impl fmt::Display for BleuConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "order={}, smoothing={}",
            self.max_order,
            self.smoothing.as_str()
        )
    }
}

/// Summed sufficient statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn zero(max_order: usize) -> Self {
        BleuStats {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    fn merge(mut self, other: BleuStats) -> Self {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        if self.hyp_len >= self.ref_len {
            return 1.0;
        }
        (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
    }

    /// Score in `[0, 100]`. Orders for which the hypotheses contain no
    /// n-gram at all have no precision and are left out of the mean.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (k, (&m, &t)) in self.matches.iter().zip(&self.totals).enumerate() {
            if t == 0 {
                continue;
            }
            let (m, t) = match smoothing {
                Smoothing::AddOne if k > 0 => (m + 1, t + 1),
                _ => (m, t),
            };
            if m == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
            orders += 1;
        }
        let bp = self.brevity_penalty();
        if orders == 0 || bp == 0.0 {
            return 0.0;
        }
        let bleu = 100.0 * bp * (log_sum / orders as f64).exp();
        bleu.min(100.0)
    }
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

pub fn segment_stats(hyp: &[u32], reference: &[u32], max_order: usize) -> BleuStats {
    let mut s = BleuStats::zero(max_order);
    s.hyp_len = hyp.len() as u64;
    s.ref_len = reference.len() as u64;
    for n in 1..=max_order {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        s.matches[n - 1] = h
            .iter()
            .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

pub fn corpus_stats<H, R>(hypotheses: &[H], references: &[R], max_order: usize) -> Result<BleuStats>
where
    H: AsRef<[u32]> + Sync,
    R: AsRef<[u32]> + Sync,
{
    if max_order == 0 {
        return Err(Error::Config("max_order must be at least 1".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Mismatch(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::invalid("BLEU needs at least one segment"));
    }
    if let Some(i) = references.iter().position(|r| r.as_ref().is_empty()) {
        return Err(Error::invalid(format!("reference segment {i} is empty")));
    }
    Ok(hypotheses
        .par_iter()
        .zip(references.par_iter())
        .map(|(h, r)| segment_stats(h.as_ref(), r.as_ref(), max_order))
        .reduce(|| BleuStats::zero(max_order), BleuStats::merge))
}

pub fn corpus_bleu<H, R>(hypotheses: &[H], references: &[R], config: BleuConfig) -> Result<f64>
where
    H: AsRef<[u32]> + Sync,
    R: AsRef<[u32]> + Sync,
{
    Ok(corpus_stats(hypotheses, references, config.max_order)?.score(config.smoothing))
}

/// Maps whitespace-separated words to ids, shared across every call so
/// hypotheses and references agree on the vocabulary.
#[derive(Debug, Clone, Default)]
pub struct WhitespaceTokenizer {
    vocab: HashMap<String, u32>,
}

impl WhitespaceTokenizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encode(&mut self, text: &str) -> TokenSequence {
        text.split_whitespace()
            .map(|w| {
                let next = self.vocab.len() as u32;
                *self.vocab.entry(w.to_string()).or_insert(next)
            })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// BLEU over plain-text lines split on whitespace.
pub fn text_bleu<S: AsRef<str>>(
    hypotheses: &[S],
    references: &[S],
    config: BleuConfig,
) -> Result<f64> {
    let mut tok = WhitespaceTokenizer::new();
    let h: Vec<TokenSequence> = hypotheses.iter().map(|s| tok.encode(s.as_ref())).collect();
    let r: Vec<TokenSequence> = references.iter().map(|s| tok.encode(s.as_ref())).collect();
    corpus_bleu(&h, &r, config)
}

/// `BLEU = 77.88 (order=4, smoothing=none)`
pub fn format_bleu(score: f64, config: BleuConfig) -> String {
    format!("BLEU = {score:.2} ({config})")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub system_id: String,
    pub lang_pair: LangPair,
    pub testset_id: String,
    pub bleu: f64,
    pub segment_count: usize,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.bleu) {
            return Err(Error::invalid(format!(
                "{}: bleu {} outside [0, 100]",
                self.system_id, self.bleu
            )));
        }
        if self.segment_count == 0 {
            return Err(Error::invalid(format!(
                "{}: segment_count must be positive",
                self.system_id
            )));
        }
        Ok(())
    }
}

/// JSON lines, one record per line.
pub fn read_eval_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EvalRecord = serde_json::from_str(line).map_err(|e| Error::Record {
            shard: path.to_path_buf(),
            line: i + 1,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_eval_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// One record per language pair, ordered by pair.
pub fn score_system(
    outputs: &HashMap<String, TokenSequence>,
    testset: &[TestExample],
    testset_id: &str,
    system_id: &str,
    config: BleuConfig,
) -> Result<Vec<EvalRecord>> {
    let mut missing: Vec<String> = testset
        .iter()
        .filter(|e| !outputs.contains_key(&e.example_id))
        .map(|e| e.example_id.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingHypotheses(missing));
    }
    type Pairs<'a> = (Vec<&'a [u32]>, Vec<&'a [u32]>);
    let mut groups: BTreeMap<&LangPair, Pairs> = BTreeMap::new();
    for e in testset {
        let g = groups.entry(&e.lang_pair).or_default();
        g.0.push(&outputs[&e.example_id]);
        g.1.push(&e.target_tokens);
    }
    groups
        .into_iter()
        .map(|(lp, (h, r))| {
            Ok(EvalRecord {
                system_id: system_id.to_string(),
                lang_pair: lp.clone(),
                testset_id: testset_id.to_string(),
                bleu: corpus_bleu(&h, &r, config)?,
                segment_count: h.len(),
            })
        })
        .collect()
}
