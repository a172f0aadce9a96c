//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::HashMap;

use contamkit::corpus_io::{CorpusDocument, LangPair, TestExample};
use contamkit::ngram_index::{build_index, NGramIndex, ScanConfig};

/// Every `(doc, offset)` where `pattern` occurs, by direct comparison.
pub fn naive_occurrences(docs: &[Vec<u32>], pattern: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        if pattern.is_empty() || doc.len() < pattern.len() {
            continue;
        }
        for off in 0..=doc.len() - pattern.len() {
            if &doc[off..off + pattern.len()] == pattern {
                out.push((d as u32, off as u32));
            }
        }
    }
    out
}

/// Longest common substring length by the classic O(|a|·|b|) table.
pub fn lcs_len(a: &[u32], b: &[u32]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &x in a {
        for j in 1..=b.len() {
            cur[j] = if x == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            best = best.max(cur[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

pub fn best_lcs(field: &[u32], docs: &[Vec<u32>]) -> usize {
    docs.iter().map(|d| lcs_len(field, d)).max().unwrap_or(0)
}

/// Every maximal common run `(doc, corpus_start, example_start, length)`
/// with `length >= min_len`, from the DP table.
pub fn all_maximal_common(
    field: &[u32],
    docs: &[Vec<u32>],
    min_len: usize,
) -> Vec<(u32, usize, usize, usize)> {
    let mut out = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        for i in 0..field.len() {
            for j in 0..doc.len() {
                if i > 0 && j > 0 && field[i - 1] == doc[j - 1] {
                    continue;
                }
                let mut l = 0;
                while i + l < field.len() && j + l < doc.len() && field[i + l] == doc[j + l] {
                    l += 1;
                }
                if l >= min_len && l > 0 {
                    out.push((d as u32, j, i, l));
                }
            }
        }
    }
    out.sort();
    out
}

/// Textbook BLEU: per-segment n-gram multisets, clipped by direct lookup.
pub fn brute_bleu(hyps: &[Vec<u32>], refs: &[Vec<u32>], max_order: usize, add_one: bool) -> f64 {
    let mut matches = vec![0u64; max_order];
    let mut totals = vec![0u64; max_order];
    let (mut h_len, mut r_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        h_len += h.len() as u64;
        r_len += r.len() as u64;
        for n in 1..=max_order {
            let grams = |s: &[u32]| {
                let mut m: HashMap<Vec<u32>, u64> = HashMap::new();
                if s.len() >= n {
                    for i in 0..=s.len() - n {
                        *m.entry(s[i..i + n].to_vec()).or_default() += 1;
                    }
                }
                m
            };
            let hg = grams(h);
            let rg = grams(r);
            for (g, c) in &hg {
                matches[n - 1] += (*c).min(*rg.get(g).unwrap_or(&0));
                totals[n - 1] += c;
            }
        }
    }
    let mut logs = Vec::new();
    for k in 0..max_order {
        if totals[k] == 0 {
            continue;
        }
        let (m, t) = if add_one && k > 0 {
            (matches[k] + 1, totals[k] + 1)
        } else {
            (matches[k], totals[k])
        };
        if m == 0 {
            return 0.0;
        }
        logs.push((m as f64 / t as f64).ln());
    }
    if h_len == 0 || logs.is_empty() {
        return 0.0;
    }
    let logp = logs.iter().sum::<f64>() / logs.len() as f64;
    let bp = if h_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / h_len as f64).exp()
    };
    100.0 * bp * logp.exp()
}

pub fn index_of(docs: &[Vec<u32>], config: ScanConfig) -> NGramIndex {
    build_index(
        docs.iter()
            .enumerate()
            .map(|(i, t)| Ok(CorpusDocument::new(format!("d{i}"), t.clone()))),
        config,
    )
    .unwrap()
}

pub fn example(id: &str, src: Vec<u32>, tgt: Vec<u32>) -> TestExample {
    TestExample {
        example_id: id.into(),
        lang_pair: LangPair::new("de", "en"),
        source_text: format!("{id} source"),
        target_text: format!("{id} target"),
        source_tokens: src.into(),
        target_tokens: tgt.into(),
    }
}

/// Small deterministic generator for fixtures that do not need proptest.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn tokens(&mut self, len: usize, alphabet: u32) -> Vec<u32> {
        (0..len)
            .map(|_| self.below(alphabet as u64) as u32)
            .collect()
    }
}

use contamkit::analytics::{
    impact_table, load_score_table, select_records, ImpactTable, TableQuery, TableRow,
};
use contamkit::injector::{ContaminationCondition, ContaminationMode, Temporal};

pub fn score_table() -> Vec<TableRow> {
    load_score_table(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bleu_tables.csv"),
    )
    .unwrap()
}

/// Impact of `mode` against the baseline rows of the same table.
pub fn table_impact(
    rows: &[TableRow],
    model: &str,
    testset: &str,
    temporal: Temporal,
    copies: u32,
    mode: ContaminationMode,
) -> ImpactTable {
    let q = |m: &'static str| TableQuery {
        model: Some(model),
        testset: Some(testset),
        temporal: Some(temporal.as_str()),
        copies: Some(copies),
        mode: Some(m),
    };
    let base = select_records(rows, &q("baseline")).unwrap();
    let cont = select_records(rows, &q(mode.as_str())).unwrap();
    impact_table(
        &base,
        &cont,
        ContaminationCondition::new(mode, temporal, copies),
    )
    .unwrap()
}

/// The ten pairs named as the contaminated language set.
pub const CONTAMINATED_PAIRS: [&str; 10] = [
    "en-de", "en-ru", "en-cs", "en-uk", "en-he", "de-en", "ru-en", "uk-en", "he-en", "cs-uk",
];
