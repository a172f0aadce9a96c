//! C ABI over `contamkit`.
//!
//! Every fallible call returns a [`CtkStatus`]. On failure the message is
//! kept per thread and read with [`ctk_last_error`]. Handles are opaque and
//! released with their `_free` function; passing NULL to a `_free` is a no-op.
//! No call unwinds across the boundary: panics become `CTK_STATUS_INTERNAL`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use contamkit::corpus_io::{read_testset, CorpusFormat, LangPair, TestExample};
use contamkit::decontam::{classify_fractions, ContaminationLabel};
use contamkit::injector::{
    load_schedule, plan_schedule, save_schedule, verify_schedule, ContaminationCondition,
    ContaminationMode, Temporal, TrainingConfig,
};
use contamkit::matcher::score_example;
use contamkit::metrics::{corpus_bleu, BleuConfig, Smoothing};
use contamkit::ngram_index::{build_index_from_path, IndexOptions, NGramIndex, ScanConfig};
use contamkit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Capacity = 6,
    Mismatch = 7,
    Overflow = 8,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkLabel {
    Clean = 0,
    SourceOnly = 1,
    TargetOnly = 2,
    Both = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkFormat {
    Jsonl = 0,
    Binary = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkMode {
    FullPrompted = 0,
    SourceOnly = 1,
    TargetOnly = 2,
    SplitPair = 3,
    BatchedPair = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkTemporal {
    Early = 0,
    Middle = 1,
    Late = 2,
    Uniform = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtkSmoothing {
    None = 0,
    AddOne = 1,
}

/// Opaque n-gram index.
pub struct CtkIndex {
    inner: NGramIndex,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtkScore {
    pub s_source: f64,
    pub s_target: f64,
    pub source_matched: usize,
    pub target_matched: usize,
    pub label: CtkLabel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtkPlanConfig {
    pub total_steps: usize,
    pub batch_size: usize,
    pub max_replace_frac: f64,
    pub window_frac: f64,
    pub seed: u64,
    pub strict_cap: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CtkStatus {
    match e {
        Error::Io { .. } => CtkStatus::Io,
        Error::Record { .. }
        | Error::Format { .. }
        | Error::Json(_)
        | Error::Csv(_)
        | Error::UnknownFormat(_) => CtkStatus::Format,
        Error::Config(_) | Error::GramLength { .. } | Error::UnknownLanguage(_) => {
            CtkStatus::Config
        }
        Error::Capacity { .. } => CtkStatus::Capacity,
        Error::Mismatch(_) | Error::BatchSize { .. } | Error::MissingHypotheses(_) => {
            CtkStatus::Mismatch
        }
        Error::PostingOverflow { .. } => CtkStatus::Overflow,
        _ => CtkStatus::InvalidArgument,
    }
}

enum Failure {
    Status(CtkStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CtkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtkStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CtkStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(CtkStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::Status(CtkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn tokens_arg<'a>(p: *const u32, len: usize, what: &str) -> Result<&'a [u32], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn label_of(l: ContaminationLabel) -> CtkLabel {
    match l {
        ContaminationLabel::Clean => CtkLabel::Clean,
        ContaminationLabel::SourceOnly => CtkLabel::SourceOnly,
        ContaminationLabel::TargetOnly => CtkLabel::TargetOnly,
        ContaminationLabel::Both => CtkLabel::Both,
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ctk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn ctk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build an index over a corpus file or shard directory.
#[no_mangle]
pub unsafe extern "C" fn ctk_index_build(
    corpus_path: *const c_char,
    format: CtkFormat,
    ngram_order: usize,
    fingerprint_bits: u32,
    out: *mut *mut CtkIndex,
) -> CtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(corpus_path, "corpus_path")?;
        let format = match format {
            CtkFormat::Jsonl => CorpusFormat::Jsonl,
            CtkFormat::Binary => CorpusFormat::Binary,
        };
        let config = ScanConfig::new(ngram_order, ScanConfig::default().threshold)?;
        let options = IndexOptions {
            fingerprint_bits,
            ..IndexOptions::default()
        };
        let inner = build_index_from_path(&path, format, config, options)?;
        *out = Box::into_raw(Box::new(CtkIndex { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ctk_index_load(path: *const c_char, out: *mut *mut CtkIndex) -> CtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = NGramIndex::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CtkIndex { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ctk_index_save(index: *const CtkIndex, path: *const c_char) -> CtkStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        index.inner.save(&path_arg(path, "path")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ctk_index_free(index: *mut CtkIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Document count, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ctk_index_num_docs(index: *const CtkIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.num_docs())
}

/// Posting count, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ctk_index_num_postings(index: *const CtkIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.num_postings())
}

/// Score one source/target pair of token fields against `index`.
#[no_mangle]
pub unsafe extern "C" fn ctk_score_fields(
    index: *const CtkIndex,
    source: *const u32,
    source_len: usize,
    target: *const u32,
    target_len: usize,
    threshold: f64,
    out: *mut CtkScore,
) -> CtkStatus {
    guard(|| {
        let index = &index.as_ref().ok_or_else(|| null("index"))?.inner;
        let out = out_arg(out, "out")?;
        let config = ScanConfig::new(index.ngram_order(), threshold)?;
        let example = TestExample {
            example_id: String::new(),
            lang_pair: LangPair::new("src", "tgt"),
            source_text: String::new(),
            target_text: String::new(),
            source_tokens: tokens_arg(source, source_len, "source")?.into(),
            target_tokens: tokens_arg(target, target_len, "target")?.into(),
        };
        let s = score_example(&example, index, &config)?;
        *out = CtkScore {
            s_source: s.s_source,
            s_target: s.s_target,
            source_matched: s.source_matched(),
            target_matched: s.target_matched(),
            label: label_of(classify_fractions(s.s_source, s.s_target, threshold)),
        };
        Ok(())
    })
}

/// A field is contaminated when its fraction is strictly above `threshold`.
#[no_mangle]
pub extern "C" fn ctk_classify(s_source: f64, s_target: f64, threshold: f64) -> CtkLabel {
    label_of(classify_fractions(s_source, s_target, threshold))
}

/// Corpus BLEU. Segments are concatenated in `hyp_tokens` / `ref_tokens`
/// with per-segment lengths in `hyp_lens` / `ref_lens`.
#[no_mangle]
pub unsafe extern "C" fn ctk_corpus_bleu(
    hyp_tokens: *const u32,
    hyp_lens: *const usize,
    ref_tokens: *const u32,
    ref_lens: *const usize,
    segments: usize,
    max_order: usize,
    smoothing: CtkSmoothing,
    out: *mut f64,
) -> CtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let split =
            |tokens: *const u32, lens: *const usize, what: &str| -> Result<Vec<&[u32]>, Failure> {
                if segments > 0 && lens.is_null() {
                    return Err(null(what));
                }
                let lens = if segments == 0 {
                    &[][..]
                } else {
                    std::slice::from_raw_parts(lens, segments)
                };
                let total: usize = lens.iter().sum();
                let flat = tokens_arg(tokens, total, what)?;
                let mut at = 0;
                Ok(lens
                    .iter()
                    .map(|&l| {
                        let s = &flat[at..at + l];
                        at += l;
                        s
                    })
                    .collect())
            };
        let h = split(hyp_tokens, hyp_lens, "hypotheses")?;
        let r = split(ref_tokens, ref_lens, "references")?;
        let config = BleuConfig {
            max_order,
            smoothing: match smoothing {
                CtkSmoothing::None => Smoothing::None,
                CtkSmoothing::AddOne => Smoothing::AddOne,
            },
        };
        *out = corpus_bleu(&h, &r, config)?;
        Ok(())
    })
}

/// Plan a schedule for a test-set file and write it to `schedule_path`.
#[no_mangle]
pub unsafe extern "C" fn ctk_plan_schedule(
    testset_path: *const c_char,
    mode: CtkMode,
    temporal: CtkTemporal,
    copies: u32,
    config: *const CtkPlanConfig,
    schedule_path: *const c_char,
    entries_out: *mut usize,
) -> CtkStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let examples = read_testset(&path_arg(testset_path, "testset_path")?)?;
        let out_path = path_arg(schedule_path, "schedule_path")?;
        let mode = match mode {
            CtkMode::FullPrompted => ContaminationMode::FullPrompted,
            CtkMode::SourceOnly => ContaminationMode::SourceOnly,
            CtkMode::TargetOnly => ContaminationMode::TargetOnly,
            CtkMode::SplitPair => ContaminationMode::SplitPair,
            CtkMode::BatchedPair => ContaminationMode::BatchedPair,
        };
        let temporal = match temporal {
            CtkTemporal::Early => Temporal::Early,
            CtkTemporal::Middle => Temporal::Middle,
            CtkTemporal::Late => Temporal::Late,
            CtkTemporal::Uniform => Temporal::Uniform,
        };
        let training = TrainingConfig {
            total_steps: c.total_steps,
            batch_size: c.batch_size,
            max_replace_frac: c.max_replace_frac,
            window_frac: c.window_frac,
            seed: c.seed,
            strict_cap: c.strict_cap,
        };
        let schedule = plan_schedule(
            &examples,
            ContaminationCondition::new(mode, temporal, copies),
            &training,
        )?;
        save_schedule(&schedule, &out_path)?;
        if let Some(n) = entries_out.as_mut() {
            *n = schedule.entries.len();
        }
        Ok(())
    })
}

/// Count invariant violations of a schedule file against its own header.
#[no_mangle]
pub unsafe extern "C" fn ctk_verify_schedule(
    schedule_path: *const c_char,
    violations_out: *mut usize,
) -> CtkStatus {
    guard(|| {
        let out = out_arg(violations_out, "violations_out")?;
        let schedule = load_schedule(&path_arg(schedule_path, "schedule_path")?)?;
        let report = verify_schedule(&schedule, &schedule.header.training);
        *out = report.violations.len();
        Ok(())
    })
}
