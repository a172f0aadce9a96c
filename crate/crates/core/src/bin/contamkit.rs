use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use contamkit::analytics::{impact_table, render_impact_text, testset_gap, ImpactReport};
use contamkit::corpus_io::TokenSequence;
use contamkit::corpus_io::{
    read_corpus, read_stream, read_testset, write_corpus, write_stream, write_testset, CorpusFormat,
};
use contamkit::decontam::score_testset;
use contamkit::decontam::{decontaminate, render_report, ReportFormat};
use contamkit::injector::{
    apply_with, load_schedule, plan_schedule_with, save_schedule, verify_schedule, ApplyOptions,
    ContaminationCondition, ContaminationMode, PlanOptions, Temporal, TrainingConfig,
};
use contamkit::matcher::ScoreRecord;
use contamkit::metrics::{
    corpus_bleu, format_bleu, read_eval_records, BleuConfig, Smoothing, WhitespaceTokenizer,
};
use contamkit::ngram_index::{build_index_from_path, IndexOptions, NGramIndex, ScanConfig};

/// Exit status when a test set contains contaminated examples.
const EXIT_CONTAMINATED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "contamkit",
    version,
    about = "Test-set contamination detection, injection and impact analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect an n-gram index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Score every test example against an index and write a score dump.
    Scan(ScanArgs),
    /// Remove contaminated examples from a test set. Exits 3 if any were found.
    Decontam(DecontamArgs),
    /// Plan, apply and verify contamination schedules.
    #[command(subcommand)]
    Inject(InjectCmd),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
    /// Impact report from baseline and contaminated eval records.
    Report(ReportArgs),
    /// Convert a corpus between JSON-lines and binary shards.
    Convert(ConvertArgs),
}

#[derive(Args, Clone)]
struct ScanOpts {
    #[arg(long, default_value_t = 8)]
    ngram: usize,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
}

impl ScanOpts {
    fn config(&self) -> Result<ScanConfig> {
        Ok(ScanConfig::new(self.ngram, self.threshold)?)
    }
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        /// Corpus file or directory of shards.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: CorpusFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        fingerprint_bits: u32,
        #[command(flatten)]
        scan: ScanOpts,
    },
    Info {
        #[arg(long)]
        index: PathBuf,
    },
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    testset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
}

#[derive(Args)]
struct DecontamArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    testset: PathBuf,
    /// Where to write the kept examples.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    report_format: String,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    testset: PathBuf,
    #[arg(long)]
    mode: ContaminationMode,
    #[arg(long)]
    temporal: Temporal,
    #[arg(long)]
    copies: u32,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    window_frac: f64,
    /// Largest share of a batch that may be replaced.
    #[arg(long, default_value_t = 0.05)]
    cap: f64,
    /// Keep strictly below the cap when it lands on a whole number of slots.
    #[arg(long)]
    strict: bool,
    /// Only place entries in parallel slots of this stream.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// JSON object mapping rendered prompt text to token ids.
    #[arg(long)]
    token_table: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum InjectCmd {
    Plan(PlanArgs),
    Apply {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Allow replacing slots that do not hold parallel documents.
        #[arg(long)]
        any_slot: bool,
    },
    Verify {
        #[arg(long)]
        schedule: PathBuf,
        /// Check against these dimensions instead of the header's own.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
}

#[derive(Args)]
struct BleuArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value = "none")]
    smoothing: Smoothing,
    #[arg(long, default_value_t = 4)]
    order: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    contaminated: PathBuf,
    /// Baseline and contaminated records on a test set that was never injected.
    #[arg(long, num_args = 2, value_names = ["BASELINE", "CONTAMINATED"])]
    clean_set: Option<Vec<PathBuf>>,
    /// `mode/temporal/copies`, for example `full_prompted/late/100`.
    #[arg(long)]
    condition: String,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    from: CorpusFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    to: CorpusFormat,
}

fn parse_condition(s: &str) -> Result<ContaminationCondition> {
    let parts: Vec<&str> = s.split('/').collect();
    let [mode, temporal, copies] = parts[..] else {
        bail!("condition `{s}` is not mode/temporal/copies");
    };
    let copies = copies.trim_end_matches('x');
    Ok(ContaminationCondition::new(
        mode.parse()?,
        temporal.parse()?,
        copies
            .parse()
            .with_context(|| format!("copies `{copies}`"))?,
    ))
}

/// Lines are either JSON token arrays or whitespace-separated text.
fn read_segments(path: &Path, tok: &mut WhitespaceTokenizer) -> Result<Vec<TokenSequence>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if line.trim_start().starts_with('[') {
                let t: Vec<u32> = serde_json::from_str(line)
                    .with_context(|| format!("{}:{}: token array", path.display(), i + 1))?;
                Ok(t.into())
            } else {
                Ok(tok.encode(line))
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Index(IndexCmd::Build {
            corpus,
            format,
            out,
            fingerprint_bits,
            scan,
        }) => {
            let options = IndexOptions {
                fingerprint_bits,
                ..IndexOptions::default()
            };
            let index = build_index_from_path(&corpus, format, scan.config()?, options)?;
            index.save(&out)?;
            eprintln!(
                "indexed {} documents, {} tokens, {} postings",
                index.num_docs(),
                index.num_tokens(),
                index.num_postings()
            );
        }
        Command::Index(IndexCmd::Info { index }) => {
            let index = NGramIndex::load(&index)?;
            println!("ngram_order: {}", index.ngram_order());
            println!("fingerprint_bits: {}", index.fingerprint_bits());
            println!("documents: {}", index.num_docs());
            println!("tokens: {}", index.num_tokens());
            println!("postings: {}", index.num_postings());
        }
        Command::Scan(a) => {
            let index = NGramIndex::load(&a.index)?;
            let config = ScanConfig::new(index.ngram_order(), a.threshold)?;
            let testset = read_testset(&a.testset)?;
            let scores = score_testset(&testset, &index, &config)?;
            let file = fs::File::create(&a.out)
                .with_context(|| format!("creating {}", a.out.display()))?;
            let mut w = BufWriter::new(file);
            for (ex, s) in testset.iter().zip(&scores) {
                serde_json::to_writer(&mut w, &ScoreRecord::new(&ex.example_id, s, &index)?)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Command::Decontam(a) => {
            let index = NGramIndex::load(&a.index)?;
            let config = ScanConfig::new(index.ngram_order(), a.threshold)?;
            let format: ReportFormat = a.report_format.parse()?;
            let testset = read_testset(&a.testset)?;
            let (kept, report) = decontaminate(&testset, &index, &config)?;
            if let Some(out) = &a.out {
                write_testset(out, &kept)?;
            }
            let rendered = render_report(&report, format)?;
            match &a.report {
                Some(p) => {
                    fs::write(p, rendered).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{rendered}"),
            }
            if !report.is_clean() {
                return Ok(ExitCode::from(EXIT_CONTAMINATED));
            }
        }
        Command::Inject(InjectCmd::Plan(a)) => {
            let examples = read_testset(&a.testset)?;
            let config = TrainingConfig {
                total_steps: a.steps,
                batch_size: a.batch_size,
                max_replace_frac: a.cap,
                window_frac: a.window_frac,
                seed: a.seed,
                strict_cap: a.strict,
            };
            let mut options = match &a.stream {
                Some(p) => PlanOptions::for_stream(&read_stream(p)?),
                None => PlanOptions::default(),
            };
            if let Some(p) = &a.token_table {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let table: HashMap<String, TokenSequence> = serde_json::from_str(&text)?;
                options.token_table = Some(table);
            }
            let condition = ContaminationCondition::new(a.mode, a.temporal, a.copies);
            let schedule = plan_schedule_with(&examples, condition, &config, &options)?;
            save_schedule(&schedule, &a.out)?;
            eprintln!(
                "{} entries in steps [{}, {}), cap {} per batch",
                schedule.entries.len(),
                schedule.header.window.start,
                schedule.header.window.end,
                schedule.header.slot_cap
            );
        }
        Command::Inject(InjectCmd::Apply {
            stream,
            schedule,
            out,
            any_slot,
        }) => {
            let stream = read_stream(&stream)?;
            let schedule = load_schedule(&schedule)?;
            let applied = apply_with(
                &stream,
                &schedule,
                ApplyOptions {
                    require_parallel_slot: !any_slot,
                },
            )?;
            write_stream(&applied, &out)?;
            eprintln!("replaced {} slots", schedule.entries.len());
        }
        Command::Inject(InjectCmd::Verify {
            schedule,
            steps,
            batch_size,
        }) => {
            let schedule = load_schedule(&schedule)?;
            let mut config = schedule.header.training.clone();
            config.total_steps = steps.unwrap_or(config.total_steps);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            let report = verify_schedule(&schedule, &config);
            println!("{}", report.summary());
            if !report.is_ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bleu(a) => {
            let mut tok = WhitespaceTokenizer::new();
            let hyp = read_segments(&a.hyp, &mut tok)?;
            let reference = read_segments(&a.reference, &mut tok)?;
            let config = BleuConfig {
                max_order: a.order,
                smoothing: a.smoothing,
            };
            println!(
                "{}",
                format_bleu(corpus_bleu(&hyp, &reference, config)?, config)
            );
        }
        Command::Report(a) => {
            let condition = parse_condition(&a.condition)?;
            let table = impact_table(
                &read_eval_records(&a.baseline)?,
                &read_eval_records(&a.contaminated)?,
                condition,
            )?;
            let gaps = match &a.clean_set {
                Some(paths) => {
                    let clean = impact_table(
                        &read_eval_records(&paths[0])?,
                        &read_eval_records(&paths[1])?,
                        condition,
                    )?;
                    testset_gap(&table.cells, &clean.cells)?
                }
                None => Vec::new(),
            };
            let report = ImpactReport::new(condition, table, gaps);
            match a.format.as_str() {
                "json" => println!("{}", serde_json::to_string_pretty(&report)?),
                "text" => print!("{}", render_impact_text(&report)),
                other => bail!("unknown report format `{other}`"),
            }
        }
        Command::Convert(a) => {
            let docs = read_corpus(&a.input, a.from)?.collect::<contamkit::Result<Vec<_>>>()?;
            write_corpus(&a.out, a.to, &docs)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
