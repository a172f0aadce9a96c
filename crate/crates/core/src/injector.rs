//! Contamination rendering, placement planning, stream substitution and plan
//! verification.
//!
//! A plan is a pure function of the examples, the condition, the training
//! configuration (including its seed) and the slot pool. Randomness comes from
//! [`CounterRng`] and is consumed in a fixed order: one step draw per document
//! (two for split pairs) in example/copy order, then slot draws step by step.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{BatchStream, Category, CorpusDocument, TestExample, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const GENERATOR_VERSION: &str = "contamkit-schedule/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationMode {
    FullPrompted,
    SourceOnly,
    TargetOnly,
    SplitPair,
    BatchedPair,
}

impl ContaminationMode {
    pub const ALL: [ContaminationMode; 5] = [
        ContaminationMode::FullPrompted,
        ContaminationMode::SourceOnly,
        ContaminationMode::TargetOnly,
        ContaminationMode::SplitPair,
        ContaminationMode::BatchedPair,
    ];

    /// Documents rendered per example copy.
    pub fn arity(self) -> usize {
        match self {
            ContaminationMode::SplitPair | ContaminationMode::BatchedPair => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContaminationMode::FullPrompted => "full_prompted",
            ContaminationMode::SourceOnly => "source_only",
            ContaminationMode::TargetOnly => "target_only",
            ContaminationMode::SplitPair => "split_pair",
            ContaminationMode::BatchedPair => "batched_pair",
        }
    }
}

impl FromStr for ContaminationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContaminationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .or(match s {
                "full" => Some(ContaminationMode::FullPrompted),
                "source" => Some(ContaminationMode::SourceOnly),
                "target" => Some(ContaminationMode::TargetOnly),
                "split" => Some(ContaminationMode::SplitPair),
                "batched" => Some(ContaminationMode::BatchedPair),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unknown contamination mode `{s}`")))
    }
}

impl fmt::Display for ContaminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    Early,
    Middle,
    Late,
    Uniform,
}

impl Temporal {
    pub const ALL: [Temporal; 4] = [
        Temporal::Early,
        Temporal::Middle,
        Temporal::Late,
        Temporal::Uniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Temporal::Early => "early",
            Temporal::Middle => "middle",
            Temporal::Late => "late",
            Temporal::Uniform => "uniform",
        }
    }

    /// Start of the injection range, in tenths of training.
    fn start_tenths(self) -> usize {
        match self {
            Temporal::Early | Temporal::Uniform => 3,
            Temporal::Middle => 6,
            Temporal::Late => 9,
        }
    }
}

impl FromStr for Temporal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Temporal::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown temporal distribution `{s}`")))
    }
}

impl fmt::Display for Temporal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContaminationCondition {
    pub mode: ContaminationMode,
    pub temporal: Temporal,
    pub copies: u32,
}

impl ContaminationCondition {
    pub fn new(mode: ContaminationMode, temporal: Temporal, copies: u32) -> Self {
        ContaminationCondition {
            mode,
            temporal,
            copies,
        }
    }
}

impl fmt::Display for ContaminationCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}x", self.mode, self.temporal, self.copies)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub total_steps: usize,
    pub batch_size: usize,
    pub max_replace_frac: f64,
    /// Width of early/middle/late windows as a fraction of training; widened
    /// when the entries would not fit.
    pub window_frac: f64,
    pub seed: u64,
    /// Read the replacement cap as strictly below `max_replace_frac`.
    #[serde(default)]
    pub strict_cap: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            total_steps: 155_000,
            batch_size: 512,
            max_replace_frac: 0.05,
            window_frac: 0.02,
            seed: 0,
            strict_cap: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "total_steps and batch_size must be positive".into(),
            ));
        }
        if !(self.max_replace_frac > 0.0 && self.max_replace_frac < 1.0) {
            return Err(Error::Config("max_replace_frac must lie in (0, 1)".into()));
        }
        if !(self.window_frac > 0.0 && self.window_frac <= 1.0) {
            return Err(Error::Config("window_frac must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Most contamination documents allowed in one batch:
    /// `floor(frac * batch)`, or the largest count strictly below
    /// `frac * batch` when `strict_cap` is set.
    pub fn slot_cap(&self) -> usize {
        let exact = self.max_replace_frac * self.batch_size as f64;
        let nearest = exact.round();
        let integral = (exact - nearest).abs() < 1e-9;
        match (integral, self.strict_cap) {
            (true, false) => nearest as usize,
            (true, true) => (nearest as usize).saturating_sub(1),
            (false, _) => exact.floor() as usize,
        }
    }

    /// First step of the range named by `temporal`.
    pub fn range_start(&self, temporal: Temporal) -> usize {
        (self.total_steps * temporal.start_tenths() / 10).min(self.total_steps - 1)
    }

    /// Inclusive upper bound for uniform placement.
    pub fn uniform_end(&self) -> usize {
        (self.total_steps * 9 / 10).min(self.total_steps - 1)
    }

    fn initial_window_len(&self) -> usize {
        ((self.window_frac * self.total_steps as f64 - 1e-9).ceil() as usize).max(1)
    }
}

/// English language names used by prompted rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub format: String,
    pub names: BTreeMap<String, String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        let names = [
            ("ace", "Achinese"),
            ("ar", "Arabic"),
            ("cs", "Czech"),
            ("de", "German"),
            ("en", "English"),
            ("es", "Spanish"),
            ("fr", "French"),
            ("he", "Hebrew"),
            ("ja", "Japanese"),
            ("ru", "Russian"),
            ("uk", "Ukrainian"),
            ("wo", "Wolof"),
            ("yo", "Yoruba"),
            ("zh", "Chinese"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        PromptTemplate {
            format: "{src_name}: {source}\n{tgt_name}: {target}".into(),
            names,
        }
    }
}

impl PromptTemplate {
    pub fn name(&self, tag: &str) -> Result<&str> {
        self.names
            .get(tag)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLanguage(tag.to_string()))
    }

    pub fn prompt(&self, ex: &TestExample) -> Result<String> {
        let src = self.name(&ex.lang_pair.source)?;
        let tgt = self.name(&ex.lang_pair.target)?;
        Ok(self
            .format
            .replace("{src_name}", src)
            .replace("{tgt_name}", tgt)
            .replace("{source}", &ex.source_text)
            .replace("{target}", &ex.target_text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Whole,
    SourceHalf,
    TargetHalf,
}

impl Part {
    pub fn as_str(self) -> &'static str {
        match self {
            Part::Whole => "whole",
            Part::SourceHalf => "source_half",
            Part::TargetHalf => "target_half",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedDoc {
    pub part: Part,
    pub text: String,
    pub lang: String,
    pub tokens: Option<TokenSequence>,
}

/// Render one example copy. Bare fields carry the example's own tokens;
/// prompted text gets tokens only from `table`.
pub fn render_with(
    example: &TestExample,
    mode: ContaminationMode,
    template: &PromptTemplate,
    table: Option<&HashMap<String, TokenSequence>>,
) -> Result<Vec<RenderedDoc>> {
    let src = || RenderedDoc {
        part: Part::Whole,
        text: example.source_text.clone(),
        lang: example.lang_pair.source.clone(),
        tokens: Some(example.source_tokens.clone()),
    };
    let tgt = || RenderedDoc {
        part: Part::Whole,
        text: example.target_text.clone(),
        lang: example.lang_pair.target.clone(),
        tokens: Some(example.target_tokens.clone()),
    };
    Ok(match mode {
        ContaminationMode::FullPrompted => {
            let text = template.prompt(example)?;
            let tokens = table.and_then(|t| t.get(&text).cloned());
            vec![RenderedDoc {
                part: Part::Whole,
                text,
                lang: example.lang_pair.to_string(),
                tokens,
            }]
        }
        ContaminationMode::SourceOnly => vec![src()],
        ContaminationMode::TargetOnly => vec![tgt()],
        ContaminationMode::SplitPair | ContaminationMode::BatchedPair => vec![
            RenderedDoc {
                part: Part::SourceHalf,
                ..src()
            },
            RenderedDoc {
                part: Part::TargetHalf,
                ..tgt()
            },
        ],
    })
}

pub fn render(
    example: &TestExample,
    mode: ContaminationMode,
    template: &PromptTemplate,
) -> Result<Vec<RenderedDoc>> {
    render_with(example, mode, template, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWindow {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

impl StepWindow {
    pub fn contains(&self, step: usize) -> bool {
        step >= self.start && step < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPool {
    /// Any slot of a batch may be replaced.
    All,
    /// Only slots holding parallel documents in the target stream.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleHeader {
    pub generator: String,
    pub condition: ContaminationCondition,
    pub training: TrainingConfig,
    pub seed: u64,
    pub template: PromptTemplate,
    pub window: StepWindow,
    /// Step at which a trainer branches from the baseline run.
    pub branch_step: usize,
    pub slot_cap: usize,
    pub slot_pool: SlotPool,
    pub example_count: usize,
    pub entry_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub step: usize,
    pub slot: usize,
    pub example_id: String,
    pub copy_index: u32,
    pub part: Part,
    pub lang: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSchedule {
    pub header: ScheduleHeader,
    pub entries: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub template: PromptTemplate,
    pub token_table: Option<HashMap<String, TokenSequence>>,
    /// Per-step slots eligible for replacement. `None` means every slot.
    pub eligible_slots: Option<Vec<Vec<usize>>>,
}

impl PlanOptions {
    /// Restrict placement to the parallel slots of `stream`.
    pub fn for_stream(stream: &BatchStream) -> Self {
        PlanOptions {
            eligible_slots: Some(
                (0..stream.num_steps())
                    .map(|s| stream.parallel_slots(s))
                    .collect(),
            ),
            ..PlanOptions::default()
        }
    }
}

struct Capacity<'a> {
    cap: usize,
    batch_size: usize,
    eligible: Option<&'a [Vec<usize>]>,
}

impl Capacity<'_> {
    fn at(&self, step: usize) -> usize {
        let pool = self
            .eligible
            .map_or(self.batch_size, |e| e.get(step).map_or(0, Vec::len));
        pool.min(self.cap)
    }

    /// Units that fit in one step: documents, or whole pairs for batched mode.
    fn units_at(&self, step: usize, mode: ContaminationMode) -> usize {
        match mode {
            ContaminationMode::BatchedPair => self.at(step) / 2,
            _ => self.at(step),
        }
    }
}

fn window_fits(
    total_units: usize,
    max_step_cap: usize,
    mode: ContaminationMode,
    required_units: usize,
) -> bool {
    match mode {
        // slack keeps room in at least two steps until the last pair is placed
        ContaminationMode::SplitPair => {
            required_units == 0 || total_units + 1 >= required_units + max_step_cap.max(1)
        }
        _ => total_units >= required_units,
    }
}

fn choose_window(
    cfg: &TrainingConfig,
    mode: ContaminationMode,
    temporal: Temporal,
    required_units: usize,
    capacity: &Capacity<'_>,
) -> Result<StepWindow> {
    let start = cfg.range_start(temporal);
    let required_docs = (required_units
        * if mode == ContaminationMode::BatchedPair {
            2
        } else {
            1
        }) as u64;
    if temporal == Temporal::Uniform {
        let w = StepWindow {
            start,
            end: cfg.uniform_end() + 1,
        };
        let total: usize = (w.start..w.end).map(|s| capacity.units_at(s, mode)).sum();
        let max_cap = (w.start..w.end).map(|s| capacity.at(s)).max().unwrap_or(0);
        if !window_fits(total, max_cap, mode, required_units) {
            return Err(Error::Capacity {
                required: required_docs,
                available: (w.start..w.end).map(|s| capacity.at(s) as u64).sum(),
            });
        }
        return Ok(w);
    }
    let mut end = (start + cfg.initial_window_len()).min(cfg.total_steps);
    let mut total: usize = (start..end).map(|s| capacity.units_at(s, mode)).sum();
    let mut max_cap = (start..end).map(|s| capacity.at(s)).max().unwrap_or(0);
    while !window_fits(total, max_cap, mode, required_units) {
        if end >= cfg.total_steps {
            return Err(Error::Capacity {
                required: required_docs,
                available: (start..end).map(|s| capacity.at(s) as u64).sum(),
            });
        }
        total += capacity.units_at(end, mode);
        max_cap = max_cap.max(capacity.at(end));
        end += 1;
    }
    Ok(StepWindow { start, end })
}

/// Steps with room left, sampled uniformly with O(1) updates.
struct OpenSteps {
    steps: Vec<usize>,
    pos: HashMap<usize, usize>,
}

impl OpenSteps {
    fn new(steps: impl IntoIterator<Item = usize>) -> Self {
        let steps: Vec<usize> = steps.into_iter().collect();
        let pos = steps.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        OpenSteps { steps, pos }
    }

    fn len(&self) -> usize {
        self.steps.len()
    }

    fn remove(&mut self, step: usize) {
        if let Some(i) = self.pos.remove(&step) {
            let last = self.steps.pop().expect("non-empty");
            if i < self.steps.len() {
                self.steps[i] = last;
                self.pos.insert(last, i);
            }
        }
    }

    fn pick(&self, rng: &mut CounterRng) -> usize {
        self.steps[rng.index(self.steps.len())]
    }

    fn pick_other(&self, rng: &mut CounterRng, not: usize) -> usize {
        let skip = self.pos[&not];
        let mut j = rng.index(self.steps.len() - 1);
        if j >= skip {
            j += 1;
        }
        self.steps[j]
    }
}

pub fn plan_schedule(
    examples: &[TestExample],
    condition: ContaminationCondition,
    config: &TrainingConfig,
) -> Result<InjectionSchedule> {
    plan_schedule_with(examples, condition, config, &PlanOptions::default())
}

pub fn plan_schedule_with(
    examples: &[TestExample],
    condition: ContaminationCondition,
    config: &TrainingConfig,
    options: &PlanOptions,
) -> Result<InjectionSchedule> {
    config.validate()?;
    if condition.copies < 1 {
        return Err(Error::Config("copies must be at least 1".into()));
    }
    if let Some(e) = &options.eligible_slots {
        if e.len() != config.total_steps {
            return Err(Error::Mismatch(format!(
                "eligible slots cover {} steps, training has {}",
                e.len(),
                config.total_steps
            )));
        }
        if e.iter().flatten().any(|&s| s >= config.batch_size) {
            return Err(Error::Mismatch("eligible slot outside the batch".into()));
        }
    }
    let mode = condition.mode;
    let cap = config.slot_cap();
    let capacity = Capacity {
        cap,
        batch_size: config.batch_size,
        eligible: options.eligible_slots.as_deref(),
    };

    // render everything up front so template errors surface before planning
    let mut docs: Vec<(usize, u32, RenderedDoc)> = Vec::new();
    for (ei, ex) in examples.iter().enumerate() {
        let rendered = render_with(ex, mode, &options.template, options.token_table.as_ref())?;
        for copy in 0..condition.copies {
            for r in &rendered {
                docs.push((ei, copy, r.clone()));
            }
        }
    }
    let units = examples.len() * condition.copies as usize;
    let required_units = match mode {
        ContaminationMode::SplitPair => units * 2,
        _ => units,
    };
    if required_units > 0 && cap == 0 {
        return Err(Error::Capacity {
            required: docs.len() as u64,
            available: 0,
        });
    }
    let window = choose_window(config, mode, condition.temporal, required_units, &capacity)?;

    let mut rng = CounterRng::new(config.seed);
    let mut remaining: HashMap<usize, usize> = (window.start..window.end)
        .map(|s| (s, capacity.at(s)))
        .collect();
    let need = if mode == ContaminationMode::BatchedPair {
        2
    } else {
        1
    };
    let mut open = OpenSteps::new((window.start..window.end).filter(|s| remaining[s] >= need));
    let mut steps = vec![0usize; docs.len()];

    let mut take = |open: &mut OpenSteps, step: usize, n: usize| {
        let r = remaining.get_mut(&step).expect("step in window");
        *r -= n;
        if *r < need {
            open.remove(step);
        }
    };

    let arity = mode.arity();
    for unit in 0..units {
        let first = unit * arity;
        match mode {
            ContaminationMode::BatchedPair => {
                let s = open.pick(&mut rng);
                take(&mut open, s, 2);
                steps[first] = s;
                steps[first + 1] = s;
            }
            ContaminationMode::SplitPair => {
                if open.len() < 2 {
                    return Err(Error::Capacity {
                        required: docs.len() as u64,
                        available: (first) as u64,
                    });
                }
                let s = open.pick(&mut rng);
                let t = open.pick_other(&mut rng, s);
                take(&mut open, s, 1);
                take(&mut open, t, 1);
                steps[first] = s;
                steps[first + 1] = t;
            }
            _ => {
                let s = open.pick(&mut rng);
                take(&mut open, s, 1);
                steps[first] = s;
            }
        }
    }

    let mut by_step: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in steps.iter().enumerate() {
        by_step.entry(s).or_default().push(i);
    }
    let mut slots = vec![0usize; docs.len()];
    for (&step, members) in &by_step {
        let mut pool: Vec<usize> = match &options.eligible_slots {
            Some(e) => e[step].clone(),
            None => (0..config.batch_size).collect(),
        };
        // partial Fisher-Yates: the first k positions become the draw
        for (k, &doc) in members.iter().enumerate() {
            let j = k + rng.index(pool.len() - k);
            pool.swap(k, j);
            slots[doc] = pool[k];
        }
    }

    let mut entries: Vec<ScheduleEntry> = docs
        .into_iter()
        .enumerate()
        .map(|(i, (ei, copy, r))| ScheduleEntry {
            step: steps[i],
            slot: slots[i],
            example_id: examples[ei].example_id.clone(),
            copy_index: copy,
            part: r.part,
            lang: r.lang,
            text: r.text,
            tokens: r.tokens,
        })
        .collect();
    entries.sort_by_key(|e| (e.step, e.slot));

    Ok(InjectionSchedule {
        header: ScheduleHeader {
            generator: GENERATOR_VERSION.into(),
            condition,
            training: config.clone(),
            seed: config.seed,
            template: options.template.clone(),
            window,
            branch_step: window.start,
            slot_cap: cap,
            slot_pool: if options.eligible_slots.is_some() {
                SlotPool::Parallel
            } else {
                SlotPool::All
            },
            example_count: examples.len(),
            entry_count: entries.len(),
        },
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApplyOptions {
    /// Refuse to replace slots that do not hold parallel-budget documents, so
    /// the parallel share of each batch stays constant.
    pub require_parallel_slot: bool,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        ApplyOptions {
            require_parallel_slot: true,
        }
    }
}

fn contamination_doc(e: &ScheduleEntry) -> CorpusDocument {
    CorpusDocument {
        doc_id: format!(
            "contam:{}:{}:{}",
            e.example_id,
            e.copy_index,
            e.part.as_str()
        ),
        tokens: e.tokens.clone().unwrap_or_default(),
        category: Category::Contamination,
        lang: e.lang.clone(),
    }
}

pub fn apply(stream: &BatchStream, schedule: &InjectionSchedule) -> Result<BatchStream> {
    apply_with(stream, schedule, ApplyOptions::default())
}

pub fn apply_with(
    stream: &BatchStream,
    schedule: &InjectionSchedule,
    options: ApplyOptions,
) -> Result<BatchStream> {
    stream.validate()?;
    let h = &schedule.header;
    if stream.batch_size != h.training.batch_size || stream.num_steps() != h.training.total_steps {
        return Err(Error::Mismatch(format!(
            "stream is {} steps x {} slots, schedule expects {} x {}",
            stream.num_steps(),
            stream.batch_size,
            h.training.total_steps,
            h.training.batch_size
        )));
    }
    let mut out = stream.clone();
    let mut used = HashSet::new();
    for e in &schedule.entries {
        if e.step >= out.num_steps() || e.slot >= out.batch_size {
            return Err(Error::Mismatch(format!(
                "entry at step {} slot {} is outside the stream",
                e.step, e.slot
            )));
        }
        assert!(
            used.insert((e.step, e.slot)),
            "slot collision at step {} slot {}",
            e.step,
            e.slot
        );
        let slot = &mut out.steps[e.step][e.slot];
        if options.require_parallel_slot && !slot.category.counts_as_parallel() {
            return Err(Error::Mismatch(format!(
                "step {} slot {} holds a {} document; contamination replaces parallel slots",
                e.step,
                e.slot,
                slot.category.as_str()
            )));
        }
        *slot = contamination_doc(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ConfigMismatch {
        detail: String,
    },
    EntryCount {
        expected: usize,
        found: usize,
    },
    CapExceeded {
        step: usize,
        count: usize,
        cap: usize,
    },
    OutOfRange {
        step: usize,
        slot: usize,
    },
    SlotCollision {
        step: usize,
        slot: usize,
    },
    OutsideWindow {
        step: usize,
        example_id: String,
        window_start: usize,
        window_end: usize,
    },
    WrongWindow {
        detail: String,
    },
    WrongPart {
        example_id: String,
        copy_index: u32,
        part: Part,
    },
    DuplicatePart {
        example_id: String,
        copy_index: u32,
        part: Part,
    },
    MissingPart {
        example_id: String,
        copy_index: u32,
        part: Part,
    },
    BadCopyIndex {
        example_id: String,
        copy_index: u32,
    },
    BatchedApart {
        example_id: String,
        copy_index: u32,
        source_step: usize,
        target_step: usize,
    },
    SplitTogether {
        example_id: String,
        copy_index: u32,
        step: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ConfigMismatch { detail } => write!(f, "config mismatch: {detail}"),
            Violation::EntryCount { expected, found } => write!(f, "entry count {found}, expected {expected}"),
            Violation::CapExceeded { step, count, cap } => write!(f, "step {step}: {count} entries exceed cap {cap}"),
            Violation::OutOfRange { step, slot } => write!(f, "step {step} slot {slot} out of range"),
            Violation::SlotCollision { step, slot } => write!(f, "step {step} slot {slot} used twice"),
            Violation::OutsideWindow {
                step,
                example_id,
                window_start,
                window_end,
            } => write!(f, "{example_id} at step {step} outside window [{window_start}, {window_end})"),
            Violation::WrongWindow { detail } => write!(f, "window: {detail}"),
            Violation::WrongPart {
                example_id,
                copy_index,
                part,
            } => write!(f, "{example_id} copy {copy_index}: part {} not allowed by mode", part.as_str()),
            Violation::DuplicatePart {
                example_id,
                copy_index,
                part,
            } => write!(f, "{example_id} copy {copy_index}: part {} repeated", part.as_str()),
            Violation::MissingPart {
                example_id,
                copy_index,
                part,
            } => write!(f, "{example_id} copy {copy_index}: part {} missing", part.as_str()),
            Violation::BadCopyIndex { example_id, copy_index } => {
                write!(f, "{example_id}: copy index {copy_index} out of range")
            }
            Violation::BatchedApart {
                example_id,
                copy_index,
                source_step,
                target_step,
            } => write!(
                f,
                "{example_id} copy {copy_index}: batched halves at steps {source_step} and {target_step}"
            ),
            Violation::SplitTogether {
                example_id,
                copy_index,
                step,
            } => write!(f, "{example_id} copy {copy_index}: split halves share step {step}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub entries: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_ok() {
            format!("ok: {} entries, 0 violations", self.entries)
        } else {
            let mut s = format!(
                "{} violations in {} entries",
                self.violations.len(),
                self.entries
            );
            for v in &self.violations {
                s.push_str("\n  ");
                s.push_str(&v.to_string());
            }
            s
        }
    }
}

/// Re-check every plan invariant against `config`.
pub fn verify_schedule(schedule: &InjectionSchedule, config: &TrainingConfig) -> VerifyReport {
    let h = &schedule.header;
    let mut v = Vec::new();
    if h.training.total_steps != config.total_steps || h.training.batch_size != config.batch_size {
        v.push(Violation::ConfigMismatch {
            detail: format!(
                "schedule built for {} x {}, checked against {} x {}",
                h.training.total_steps,
                h.training.batch_size,
                config.total_steps,
                config.batch_size
            ),
        });
    }
    let cap = config.slot_cap();
    let mode = h.condition.mode;
    let expected = h.example_count * h.condition.copies as usize * mode.arity();
    if schedule.entries.len() != expected || h.entry_count != schedule.entries.len() {
        v.push(Violation::EntryCount {
            expected,
            found: schedule.entries.len(),
        });
    }

    let expected_start = config.range_start(h.condition.temporal);
    let window = if h.condition.temporal == Temporal::Uniform {
        let w = StepWindow {
            start: expected_start,
            end: config.uniform_end() + 1,
        };
        if h.window != w {
            v.push(Violation::WrongWindow {
                detail: format!("uniform range must be [{}, {})", w.start, w.end),
            });
        }
        w
    } else {
        if h.window.start != expected_start
            || h.window.end > config.total_steps
            || h.window.is_empty()
        {
            v.push(Violation::WrongWindow {
                detail: format!(
                    "{} window [{}, {}) must start at {} and end by {}",
                    h.condition.temporal,
                    h.window.start,
                    h.window.end,
                    expected_start,
                    config.total_steps
                ),
            });
        }
        h.window
    };

    let mut per_step: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used = HashSet::new();
    let mut halves: BTreeMap<(&str, u32), BTreeMap<Part, usize>> = BTreeMap::new();
    for e in &schedule.entries {
        if e.step >= config.total_steps || e.slot >= config.batch_size {
            v.push(Violation::OutOfRange {
                step: e.step,
                slot: e.slot,
            });
        }
        if !used.insert((e.step, e.slot)) {
            v.push(Violation::SlotCollision {
                step: e.step,
                slot: e.slot,
            });
        }
        *per_step.entry(e.step).or_default() += 1;
        if !window.contains(e.step) {
            v.push(Violation::OutsideWindow {
                step: e.step,
                example_id: e.example_id.clone(),
                window_start: window.start,
                window_end: window.end,
            });
        }
        if e.copy_index >= h.condition.copies {
            v.push(Violation::BadCopyIndex {
                example_id: e.example_id.clone(),
                copy_index: e.copy_index,
            });
        }
        let allowed = match mode.arity() {
            1 => e.part == Part::Whole,
            _ => e.part != Part::Whole,
        };
        if !allowed {
            v.push(Violation::WrongPart {
                example_id: e.example_id.clone(),
                copy_index: e.copy_index,
                part: e.part,
            });
        }
        let slot = halves.entry((&e.example_id, e.copy_index)).or_default();
        if slot.insert(e.part, e.step).is_some() {
            v.push(Violation::DuplicatePart {
                example_id: e.example_id.clone(),
                copy_index: e.copy_index,
                part: e.part,
            });
        }
    }
    for (&step, &count) in &per_step {
        if count > cap {
            v.push(Violation::CapExceeded { step, count, cap });
        }
    }
    if mode.arity() == 2 {
        for (&(id, copy), parts) in &halves {
            let src = parts.get(&Part::SourceHalf);
            let tgt = parts.get(&Part::TargetHalf);
            for (p, got) in [(Part::SourceHalf, src), (Part::TargetHalf, tgt)] {
                if got.is_none() {
                    v.push(Violation::MissingPart {
                        example_id: id.to_string(),
                        copy_index: copy,
                        part: p,
                    });
                }
            }
            if let (Some(&s), Some(&t)) = (src, tgt) {
                if mode == ContaminationMode::BatchedPair && s != t {
                    v.push(Violation::BatchedApart {
                        example_id: id.to_string(),
                        copy_index: copy,
                        source_step: s,
                        target_step: t,
                    });
                }
                if mode == ContaminationMode::SplitPair && s == t {
                    v.push(Violation::SplitTogether {
                        example_id: id.to_string(),
                        copy_index: copy,
                        step: s,
                    });
                }
            }
        }
    }
    VerifyReport {
        entries: schedule.entries.len(),
        violations: v,
    }
}

/// Header line followed by one line per entry.
pub fn write_schedule<W: Write>(schedule: &InjectionSchedule, mut w: W) -> Result<()> {
    let io = |e| Error::io("<schedule>", e);
    serde_json::to_writer(&mut w, &schedule.header)?;
    w.write_all(b"\n").map_err(io)?;
    for e in &schedule.entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_schedule(schedule: &InjectionSchedule, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_schedule(schedule, BufWriter::new(file))
}

pub fn load_schedule(path: &Path) -> Result<InjectionSchedule> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{}: empty schedule file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: ScheduleHeader = serde_json::from_str(&header_line).map_err(|e| Error::Record {
        shard: path.to_path_buf(),
        line: 1,
        field: "<header>".into(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            shard: path.to_path_buf(),
            line: i + 2,
            field: "<entry>".into(),
            message: e.to_string(),
        })?);
    }
    Ok(InjectionSchedule { header, entries })
}
