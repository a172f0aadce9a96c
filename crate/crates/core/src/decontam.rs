//! Label scored examples, drop contaminated ones from a test set, and report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::TestExample;
use crate::error::{Error, Result};
use crate::matcher::{score_example, ContaminationScore};
use crate::ngram_index::{NGramIndex, ScanConfig};

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationLabel {
    Clean,
    SourceOnly,
    TargetOnly,
    Both,
}

impl ContaminationLabel {
    pub const ALL: [ContaminationLabel; 4] = [
        ContaminationLabel::Clean,
        ContaminationLabel::SourceOnly,
        ContaminationLabel::TargetOnly,
        ContaminationLabel::Both,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContaminationLabel::Clean => "clean",
            ContaminationLabel::SourceOnly => "source_only",
            ContaminationLabel::TargetOnly => "target_only",
            ContaminationLabel::Both => "both",
        }
    }
}

/// A field counts as contaminated only when strictly above the threshold.
pub fn classify(score: &ContaminationScore, config: &ScanConfig) -> ContaminationLabel {
    classify_fractions(score.s_source, score.s_target, config.threshold)
}

pub fn classify_fractions(s_source: f64, s_target: f64, threshold: f64) -> ContaminationLabel {
    match (s_source > threshold, s_target > threshold) {
        (false, false) => ContaminationLabel::Clean,
        (true, false) => ContaminationLabel::SourceOnly,
        (false, true) => ContaminationLabel::TargetOnly,
        (true, true) => ContaminationLabel::Both,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub clean: usize,
    pub source_only: usize,
    pub target_only: usize,
    pub both: usize,
}

impl LabelCounts {
    pub fn add(&mut self, label: ContaminationLabel) {
        *self.get_mut(label) += 1;
    }

    pub fn get(&self, label: ContaminationLabel) -> usize {
        match label {
            ContaminationLabel::Clean => self.clean,
            ContaminationLabel::SourceOnly => self.source_only,
            ContaminationLabel::TargetOnly => self.target_only,
            ContaminationLabel::Both => self.both,
        }
    }

    fn get_mut(&mut self, label: ContaminationLabel) -> &mut usize {
        match label {
            ContaminationLabel::Clean => &mut self.clean,
            ContaminationLabel::SourceOnly => &mut self.source_only,
            ContaminationLabel::TargetOnly => &mut self.target_only,
            ContaminationLabel::Both => &mut self.both,
        }
    }

    pub fn total(&self) -> usize {
        self.clean + self.source_only + self.target_only + self.both
    }

    pub fn contaminated(&self) -> usize {
        self.total() - self.clean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width <= 1.0) {
            return Err(Error::Config(format!(
                "bin width must lie in (0, 1], got {bin_width}"
            )));
        }
        let bins = (1.0 / bin_width - 1e-9).ceil() as usize;
        Ok(Histogram {
            bin_width,
            counts: vec![0; bins],
        })
    }

    /// Bin `i` covers `[i*w, (i+1)*w)`; a score of exactly 1 lands in the
    /// last bin.
    pub fn add(&mut self, score: f64) {
        let last = self.counts.len() - 1;
        let bin = ((score.clamp(0.0, 1.0) / self.bin_width + 1e-9).floor() as usize).min(last);
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecontamReport {
    pub total: usize,
    pub threshold: f64,
    pub counts: LabelCounts,
    pub by_lang_pair: BTreeMap<String, LabelCounts>,
    pub histogram: Histogram,
    pub removed_ids: Vec<String>,
}

impl DecontamReport {
    pub fn empty(threshold: f64, bin_width: f64) -> Result<Self> {
        Ok(DecontamReport {
            total: 0,
            threshold,
            counts: LabelCounts::default(),
            by_lang_pair: BTreeMap::new(),
            histogram: Histogram::new(bin_width)?,
            removed_ids: Vec::new(),
        })
    }

    pub fn removed(&self) -> usize {
        self.counts.contaminated()
    }

    pub fn kept(&self) -> usize {
        self.counts.clean
    }

    pub fn removed_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.removed() as f64 / self.total as f64
        }
    }

    pub fn is_clean(&self) -> bool {
        self.removed() == 0
    }

    /// Checks the count invariants.
    pub fn check(&self) -> Result<()> {
        if self.counts.total() != self.total || self.histogram.total() != self.total {
            return Err(Error::invalid("report counts do not sum to total"));
        }
        let pair_total: usize = self.by_lang_pair.values().map(LabelCounts::total).sum();
        if pair_total != self.total || self.removed_ids.len() != self.removed() {
            return Err(Error::invalid("report breakdown is inconsistent"));
        }
        Ok(())
    }
}

/// Score every example in parallel, preserving input order.
pub fn score_testset(
    testset: &[TestExample],
    index: &NGramIndex,
    config: &ScanConfig,
) -> Result<Vec<ContaminationScore>> {
    testset
        .par_iter()
        .map(|ex| score_example(ex, index, config))
        .collect()
}

/// Split a scored test set into kept examples and a report.
pub fn partition(
    testset: &[TestExample],
    scores: &[ContaminationScore],
    config: &ScanConfig,
    bin_width: f64,
) -> Result<(Vec<TestExample>, DecontamReport)> {
    if testset.len() != scores.len() {
        return Err(Error::invalid("one score per example is required"));
    }
    let mut report = DecontamReport::empty(config.threshold, bin_width)?;
    let mut kept = Vec::new();
    for (ex, score) in testset.iter().zip(scores) {
        let label = classify(score, config);
        report.total += 1;
        report.counts.add(label);
        report
            .by_lang_pair
            .entry(ex.lang_pair.to_string())
            .or_default()
            .add(label);
        report.histogram.add(score.combined());
        if label == ContaminationLabel::Clean {
            kept.push(ex.clone());
        } else {
            report.removed_ids.push(ex.example_id.clone());
        }
    }
    Ok((kept, report))
}

pub fn decontaminate(
    testset: &[TestExample],
    index: &NGramIndex,
    config: &ScanConfig,
) -> Result<(Vec<TestExample>, DecontamReport)> {
    if testset.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let scores = score_testset(testset, index, config)?;
    partition(testset, &scores, config, DEFAULT_BIN_WIDTH)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

pub fn render_report(report: &DecontamReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Text => Ok(render_text(report)),
    }
}

pub fn render_report_str(report: &DecontamReport, format: &str) -> Result<String> {
    render_report(report, format.parse()?)
}

fn render_text(r: &DecontamReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "examples: {}", r.total);
    let _ = writeln!(out, "threshold: {} (strictly above)", r.threshold);
    let _ = writeln!(
        out,
        "removed: {} of {} ({:.1}% removed), kept: {}",
        r.removed(),
        r.total,
        r.removed_pct(),
        r.kept()
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12} {:>8}", "label", "count");
    for label in ContaminationLabel::ALL {
        let c = r.counts.get(label);
        if c > 0 {
            let _ = writeln!(out, "{:<12} {:>8}", label.as_str(), c);
        }
    }
    if !r.by_lang_pair.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>12} {:>12} {:>8} {:>8}",
            "pair", "clean", "source_only", "target_only", "both", "total"
        );
        for (pair, c) in &r.by_lang_pair {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>12} {:>12} {:>8} {:>8}",
                pair,
                c.clean,
                c.source_only,
                c.target_only,
                c.both,
                c.total()
            );
        }
    }
    if r.total > 0 {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:>8}", "score", "count");
        let w = r.histogram.bin_width;
        for (i, c) in r.histogram.counts.iter().enumerate() {
            let lo = i as f64 * w;
            let hi = ((i + 1) as f64 * w).min(1.0);
            let _ = writeln!(
                out,
                "[{lo:.2}, {hi:.2}{}   {c:>8}",
                if i + 1 == r.histogram.counts.len() {
                    "]"
                } else {
                    ")"
                }
            );
        }
    }
    out
}
