//! Seed-and-extend matching of test fields against an [`NGramIndex`].
//!
//! Each distinct n-gram of a field is looked up once. Every verified hit is
//! grown left and right while tokens agree, giving maximal spans. A field's
//! overlap fraction is the length of its single longest span divided by the
//! field's token count.
//!
//! Fields shorter than `n` are searched as one whole-field pattern, so they
//! score either 0 or 1.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus_io::TestExample;
use crate::error::Result;
use crate::ngram_index::{DocRef, NGramIndex, ScanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchSpan {
    pub doc: DocRef,
    pub corpus_start: usize,
    pub example_start: usize,
    pub length: usize,
}

impl MatchSpan {
    /// `(length desc, doc, corpus_start, example_start)`: the first element
    /// under this order is the preferred longest match.
    fn preference_key(&self) -> (std::cmp::Reverse<usize>, DocRef, usize, usize) {
        (
            std::cmp::Reverse(self.length),
            self.doc,
            self.corpus_start,
            self.example_start,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationScore {
    pub s_source: f64,
    pub s_target: f64,
    pub source_len: usize,
    pub target_len: usize,
    pub longest_source: Option<MatchSpan>,
    pub longest_target: Option<MatchSpan>,
}

impl ContaminationScore {
    pub fn combined(&self) -> f64 {
        self.s_source.max(self.s_target)
    }

    pub fn source_matched(&self) -> usize {
        self.longest_source.map_or(0, |s| s.length)
    }

    pub fn target_matched(&self) -> usize {
        self.longest_target.map_or(0, |s| s.length)
    }
}

/// All maximal spans shared by `field` and any single corpus document.
pub fn find_spans(
    field: &[u32],
    index: &NGramIndex,
    _config: &ScanConfig,
) -> Result<Vec<MatchSpan>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    let n = index.ngram_order();
    if field.len() < n {
        return Ok(index
            .find_occurrences(field)?
            .into_iter()
            .map(|loc| MatchSpan {
                doc: loc.doc,
                corpus_start: loc.offset as usize,
                example_start: 0,
                length: field.len(),
            })
            .collect());
    }

    let mut positions: HashMap<&[u32], Vec<usize>> = HashMap::new();
    for (i, gram) in field.windows(n).enumerate() {
        positions.entry(gram).or_default().push(i);
    }

    let mut spans = BTreeSet::new();
    for (gram, at) in positions {
        let hits = index.query(gram)?;
        if hits.is_empty() {
            continue;
        }
        for loc in hits {
            let doc = index.doc_tokens(loc.doc)?;
            for &ei in &at {
                let ci = loc.offset as usize;
                // a seed whose left neighbours agree is covered by an earlier seed
                if ei > 0 && ci > 0 && field[ei - 1] == doc[ci - 1] {
                    continue;
                }
                let mut len = n;
                while ei + len < field.len()
                    && ci + len < doc.len()
                    && field[ei + len] == doc[ci + len]
                {
                    len += 1;
                }
                spans.insert(MatchSpan {
                    doc: loc.doc,
                    corpus_start: ci,
                    example_start: ei,
                    length: len,
                });
            }
        }
    }
    Ok(spans.into_iter().collect())
}

/// Longest span; ties go to the smallest doc ref, then corpus start, then
/// example start.
pub fn longest_match(spans: &[MatchSpan]) -> Option<MatchSpan> {
    spans.iter().min_by_key(|s| s.preference_key()).copied()
}

fn field_score(
    field: &[u32],
    index: &NGramIndex,
    config: &ScanConfig,
) -> Result<(f64, Option<MatchSpan>)> {
    let longest = longest_match(&find_spans(field, index, config)?);
    let frac = match (longest, field.len()) {
        (_, 0) | (None, _) => 0.0,
        (Some(s), len) => s.length as f64 / len as f64,
    };
    Ok((frac, longest))
}

pub fn score_example(
    example: &TestExample,
    index: &NGramIndex,
    config: &ScanConfig,
) -> Result<ContaminationScore> {
    let (s_source, longest_source) = field_score(&example.source_tokens, index, config)?;
    let (s_target, longest_target) = field_score(&example.target_tokens, index, config)?;
    Ok(ContaminationScore {
        s_source,
        s_target,
        source_len: example.source_tokens.len(),
        target_len: example.target_tokens.len(),
        longest_source,
        longest_target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub doc_id: String,
    pub corpus_start: usize,
    pub example_start: usize,
    pub length: usize,
}

/// One line of a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub example_id: String,
    pub s_source: f64,
    pub s_target: f64,
    pub longest_source: Option<SpanRecord>,
    pub longest_target: Option<SpanRecord>,
}

impl ScoreRecord {
    pub fn new(example_id: &str, score: &ContaminationScore, index: &NGramIndex) -> Result<Self> {
        let span = |s: Option<MatchSpan>| -> Result<Option<SpanRecord>> {
            s.map(|s| {
                Ok(SpanRecord {
                    doc_id: index.doc_id(s.doc)?.to_string(),
                    corpus_start: s.corpus_start,
                    example_start: s.example_start,
                    length: s.length,
                })
            })
            .transpose()
        };
        Ok(ScoreRecord {
            example_id: example_id.to_string(),
            s_source: score.s_source,
            s_target: score.s_target,
            longest_source: span(score.longest_source)?,
            longest_target: span(score.longest_target)?,
        })
    }
}
