//! Contamination-impact aggregates: per-pair deltas and percent changes,
//! quartile summaries, direction groups, contaminated-vs-clean gaps and
//! training-curve summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::LangPair;
use crate::error::{Error, Result};
use crate::injector::ContaminationCondition;
use crate::metrics::EvalRecord;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub lang_pair: LangPair,
    pub testset_id: String,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.testset_id, self.lang_pair)
    }
}

fn key(r: &EvalRecord) -> RecordKey {
    RecordKey {
        lang_pair: r.lang_pair.clone(),
        testset_id: r.testset_id.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCell {
    pub condition: ContaminationCondition,
    pub lang_pair: LangPair,
    pub testset_id: String,
    pub baseline_bleu: f64,
    pub contaminated_bleu: f64,
    pub delta: f64,
    /// `None` when the baseline is 0.
    pub pct: Option<f64>,
}

impl ImpactCell {
    pub fn new(
        condition: ContaminationCondition,
        lang_pair: LangPair,
        testset_id: impl Into<String>,
        baseline_bleu: f64,
        contaminated_bleu: f64,
    ) -> Self {
        let delta = contaminated_bleu - baseline_bleu;
        ImpactCell {
            condition,
            lang_pair,
            testset_id: testset_id.into(),
            baseline_bleu,
            contaminated_bleu,
            delta,
            pct: (baseline_bleu != 0.0).then(|| 100.0 * delta / baseline_bleu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactTable {
    pub cells: Vec<ImpactCell>,
    pub missing_in_baseline: Vec<RecordKey>,
    pub missing_in_contaminated: Vec<RecordKey>,
}

impl ImpactTable {
    pub fn is_complete(&self) -> bool {
        self.missing_in_baseline.is_empty() && self.missing_in_contaminated.is_empty()
    }

    pub fn cell(&self, lang_pair: &LangPair) -> Option<&ImpactCell> {
        self.cells.iter().find(|c| &c.lang_pair == lang_pair)
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.delta).collect()
    }
}

fn index_records<'a>(
    records: &'a [EvalRecord],
    what: &str,
) -> Result<BTreeMap<RecordKey, &'a EvalRecord>> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert(key(r), r).is_some() {
            return Err(Error::invalid(format!(
                "{what} records repeat key {}",
                key(r)
            )));
        }
    }
    Ok(map)
}

/// One cell per `(lang_pair, testset)` present on both sides, ordered by key.
/// Keys present on one side only are listed in the result.
pub fn impact_table(
    baseline: &[EvalRecord],
    contaminated: &[EvalRecord],
    condition: ContaminationCondition,
) -> Result<ImpactTable> {
    let b = index_records(baseline, "baseline")?;
    let c = index_records(contaminated, "contaminated")?;
    let cells: Vec<ImpactCell> = b
        .iter()
        .filter_map(|(k, rb)| {
            c.get(k).map(|rc| {
                ImpactCell::new(
                    condition,
                    k.lang_pair.clone(),
                    k.testset_id.clone(),
                    rb.bleu,
                    rc.bleu,
                )
            })
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::Mismatch(
            "baseline and contaminated records share no key".into(),
        ));
    }
    Ok(ImpactTable {
        cells,
        missing_in_baseline: c.keys().filter(|k| !b.contains_key(k)).cloned().collect(),
        missing_in_contaminated: b.keys().filter(|k| !c.contains_key(k)).cloned().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile `q` of sorted data by linear interpolation at rank `q * (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid("box_stats of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("box_stats input contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = (v.iter().sum::<f64>() / v.len() as f64).clamp(v[0], v[v.len() - 1]);
    Ok(BoxStats {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "En->X")]
    EnToX,
    #[serde(rename = "X->En")]
    XToEn,
    #[serde(rename = "X->Y")]
    XToY,
}

impl Direction {
    pub fn of(pair: &LangPair) -> Direction {
        match (pair.source.as_str(), pair.target.as_str()) {
            ("en", _) => Direction::EnToX,
            (_, "en") => Direction::XToEn,
            _ => Direction::XToY,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::EnToX => "En->X",
            Direction::XToEn => "X->En",
            Direction::XToY => "X->Y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub cells: usize,
    pub mean_delta: f64,
    /// Over cells with a defined percentage; `None` if there are none.
    pub mean_pct: Option<f64>,
}

/// Groups with no cells are absent from the map.
pub fn direction_group(cells: &[ImpactCell]) -> BTreeMap<Direction, GroupMean> {
    let mut acc: BTreeMap<Direction, (usize, f64, usize, f64)> = BTreeMap::new();
    for c in cells {
        let e = acc.entry(Direction::of(&c.lang_pair)).or_default();
        e.0 += 1;
        e.1 += c.delta;
        if let Some(p) = c.pct {
            e.2 += 1;
            e.3 += p;
        }
    }
    acc.into_iter()
        .map(|(d, (n, sd, np, sp))| {
            (
                d,
                GroupMean {
                    cells: n,
                    mean_delta: sd / n as f64,
                    mean_pct: (np > 0).then(|| sp / np as f64),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub condition: ContaminationCondition,
    pub lang_pair: LangPair,
    pub delta_contaminated_set: f64,
    pub delta_clean_set: f64,
    /// Positive when the contaminated set improves beyond the clean one.
    pub gap: f64,
}

/// Pairs cells by `(condition, lang_pair)`; the testset of each side is
/// implied by which argument it came from.
pub fn testset_gap(
    on_contaminated_set: &[ImpactCell],
    on_clean_set: &[ImpactCell],
) -> Result<Vec<GapCell>> {
    let clean: BTreeMap<(ContaminationCondition, &LangPair), &ImpactCell> = on_clean_set
        .iter()
        .map(|c| ((c.condition, &c.lang_pair), c))
        .collect();
    let gaps: Vec<GapCell> = on_contaminated_set
        .iter()
        .filter_map(|c| {
            clean.get(&(c.condition, &c.lang_pair)).map(|k| GapCell {
                condition: c.condition,
                lang_pair: c.lang_pair.clone(),
                delta_contaminated_set: c.delta,
                delta_clean_set: k.delta,
                gap: c.delta - k.delta,
            })
        })
        .collect();
    if gaps.is_empty() {
        return Err(Error::Mismatch(
            "contaminated-set and clean-set cells share no key".into(),
        ));
    }
    Ok(gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesSummary {
    pub peak_delta: f64,
    pub final_delta: f64,
}

/// Peak and final change relative to the last point before `window_start`.
pub fn timeseries_summary(points: &[(u64, f64)], window_start: u64) -> Result<TimeseriesSummary> {
    if points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::invalid(
            "timeseries steps must be strictly increasing",
        ));
    }
    let split = points.partition_point(|&(s, _)| s < window_start);
    if split == 0 {
        return Err(Error::invalid(format!(
            "no point before window start {window_start}"
        )));
    }
    if split == points.len() {
        return Err(Error::invalid(format!(
            "no point at or after window start {window_start}"
        )));
    }
    let before = points[split - 1].1;
    let peak = points[split..]
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TimeseriesSummary {
        peak_delta: peak - before,
        final_delta: points[points.len() - 1].1 - before,
    })
}

/// One row of a published score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub testset: String,
    pub temporal: String,
    pub copies: u32,
    pub mode: String,
    pub lang_pair: String,
    pub bleu: f64,
}

/// Reads a CSV score table; `#` lines are comments.
pub fn load_score_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default)]
pub struct TableQuery<'a> {
    pub model: Option<&'a str>,
    pub testset: Option<&'a str>,
    pub temporal: Option<&'a str>,
    pub copies: Option<u32>,
    pub mode: Option<&'a str>,
}

/// Rows matching every set field of `q`, as eval records.
pub fn select_records(rows: &[TableRow], q: &TableQuery<'_>) -> Result<Vec<EvalRecord>> {
    rows.iter()
        .filter(|r| {
            q.model.is_none_or(|m| r.model == m)
                && q.testset.is_none_or(|t| r.testset == t)
                && q.temporal.is_none_or(|t| r.temporal == t)
                && q.copies.is_none_or(|c| r.copies == c)
                && q.mode.is_none_or(|m| r.mode == m)
        })
        .map(|r| {
            Ok(EvalRecord {
                system_id: format!("{}:{}:{}:{}", r.model, r.mode, r.temporal, r.copies),
                lang_pair: r.lang_pair.parse()?,
                testset_id: r.testset.clone(),
                bleu: r.bleu,
                segment_count: 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub condition: ContaminationCondition,
    pub table: ImpactTable,
    pub summary: Option<BoxStats>,
    pub directions: BTreeMap<Direction, GroupMean>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps: Vec<GapCell>,
}

impl ImpactReport {
    pub fn new(condition: ContaminationCondition, table: ImpactTable, gaps: Vec<GapCell>) -> Self {
        ImpactReport {
            condition,
            summary: box_stats(&table.deltas()).ok(),
            directions: direction_group(&table.cells),
            table,
            gaps,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// Aligned text in En->X, X->En, X->Y blocks.
pub fn render_impact_text(report: &ImpactReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "condition: {}", report.condition);
    let gap_of: BTreeMap<&LangPair, f64> =
        report.gaps.iter().map(|g| (&g.lang_pair, g.gap)).collect();
    let with_gap = !gap_of.is_empty();
    let _ = write!(
        out,
        "{:<10} {:<10} {:>9} {:>9} {:>8} {:>8}",
        "pair", "testset", "baseline", "contam", "delta", "pct"
    );
    if with_gap {
        let _ = write!(out, " {:>8}", "gap");
    }
    out.push('\n');
    let blocks: BTreeSet<Direction> = report
        .table
        .cells
        .iter()
        .map(|c| Direction::of(&c.lang_pair))
        .collect();
    for d in blocks {
        let _ = writeln!(out, "{}", d.label());
        for c in report
            .table
            .cells
            .iter()
            .filter(|c| Direction::of(&c.lang_pair) == d)
        {
            let _ = write!(
                out,
                "{:<10} {:<10} {:>9.2} {:>9.2} {:>8.2} {:>8}",
                c.lang_pair.to_string(),
                c.testset_id,
                c.baseline_bleu,
                c.contaminated_bleu,
                c.delta,
                fmt_opt(c.pct)
            );
            if with_gap {
                let _ = write!(out, " {:>8}", fmt_opt(gap_of.get(&c.lang_pair).copied()));
            }
            out.push('\n');
        }
    }
    for (d, g) in &report.directions {
        let _ = writeln!(
            out,
            "{} mean delta {:.2}, mean pct {} over {} cells",
            d.label(),
            g.mean_delta,
            fmt_opt(g.mean_pct),
            g.cells
        );
    }
    if let Some(s) = report.summary {
        let _ = writeln!(
            out,
            "delta min {:.2} q1 {:.2} median {:.2} q3 {:.2} max {:.2} mean {:.2}",
            s.min, s.q1, s.median, s.q3, s.max, s.mean
        );
    }
    for k in &report.table.missing_in_baseline {
        let _ = writeln!(out, "missing in baseline: {k}");
    }
    for k in &report.table.missing_in_contaminated {
        let _ = writeln!(out, "missing in contaminated: {k}");
    }
    out
}
