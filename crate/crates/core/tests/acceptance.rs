//! End-to-end acceptance checks. Runs without the test harness and prints one
//! PASS or FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use contamkit::analytics::{direction_group, testset_gap, Direction};
use contamkit::corpus_io::{
    read_stream, write_stream, BatchStream, Category, CorpusDocument, TestExample,
};
use contamkit::decontam::decontaminate;
use contamkit::injector::{
    apply, load_schedule, plan_schedule, plan_schedule_with, save_schedule, verify_schedule,
    ContaminationCondition, ContaminationMode, PlanOptions, Temporal, TrainingConfig,
};
use contamkit::matcher::score_example;
use contamkit::metrics::{corpus_bleu, BleuConfig, Smoothing};
use contamkit::ngram_index::{build_index, build_index_from_path, IndexOptions, ScanConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let took = start.elapsed();
    ensure!(took < limit, "took {:.1?}, limit {:?}", took, limit);
    Ok(format!("{detail}; {took:.2?}"))
}

fn docs_of(tokens: &[Vec<u32>]) -> impl Iterator<Item = contamkit::Result<CorpusDocument>> + '_ {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| Ok(CorpusDocument::new(format!("d{i}"), t.clone())))
}

/// Field built from random tokens with corpus excerpts spliced in.
fn field_with_excerpts(rng: &mut Lcg, corpus: &[Vec<u32>], alphabet: u32) -> Vec<u32> {
    let len = 1 + rng.below(100) as usize;
    let mut f = Vec::with_capacity(len);
    while f.len() < len {
        let d = &corpus[rng.below(corpus.len() as u64) as usize];
        if rng.below(2) == 0 && !d.is_empty() {
            let start = rng.below(d.len() as u64) as usize;
            let take = (1 + rng.below(40) as usize)
                .min(d.len() - start)
                .min(len - f.len());
            f.extend_from_slice(&d[start..start + take]);
        } else {
            f.push(rng.below(alphabet as u64) as u32);
        }
    }
    f
}

fn matcher_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = ScanConfig::default();
    let mut rng = Lcg(0xACCE_0001);
    let mut compared = 0usize;
    let mut nontrivial = 0usize;
    for instance in 0..200 {
        let alphabet = [3u32, 6, 20, 1000][instance % 4];
        let mut corpus = Vec::new();
        let mut budget = 1 + rng.below(10_000) as usize;
        while budget > 0 {
            let len = (rng.below(800) as usize).min(budget);
            corpus.push(rng.tokens(len, alphabet));
            budget -= len.max(1).min(budget);
        }
        let idx = build_index(docs_of(&corpus), cfg).map_err(|e| e.to_string())?;
        let src = field_with_excerpts(&mut rng, &corpus, alphabet);
        let tgt = field_with_excerpts(&mut rng, &corpus, alphabet);
        let s = score_example(&example("x", src.clone(), tgt.clone()), &idx, &cfg)
            .map_err(|e| e.to_string())?;
        for (field, frac) in [(&src, s.s_source), (&tgt, s.s_target)] {
            let best = best_lcs(field, &corpus);
            if best >= 8 {
                nontrivial += 1;
                ensure!(
                    frac == best as f64 / field.len() as f64,
                    "instance {instance}: {frac} != {best}/{}",
                    field.len()
                );
            } else if field.len() >= 8 {
                ensure!(
                    frac == 0.0,
                    "instance {instance}: score {frac} without an 8-token match"
                );
            }
            compared += 1;
        }
    }
    ensure!(
        nontrivial >= 100,
        "only {nontrivial} fields had a match of 8 or more tokens"
    );
    within(
        start,
        Duration::from_secs(60),
        format!("200 instances, {compared} fields, {nontrivial} with matches >= 8"),
    )
}

fn threshold_semantics() -> Outcome {
    let cfg = ScanConfig::default();
    let mut checked = Vec::new();
    for len in [10usize, 20, 30, 100] {
        let at = len * 7 / 10;
        ensure!(at * 10 == len * 7, "length {len} has no exact 70% point");
        for (matched, expect_removed) in [(at, false), (at + 1, true)] {
            // source shares exactly `matched` leading tokens with the corpus
            let src: Vec<u32> = (0..len as u32).collect();
            let mut doc: Vec<u32> = src[..matched].to_vec();
            doc.push(u32::MAX);
            let tgt: Vec<u32> = (10_000..10_000 + len as u32).collect();
            let idx = build_index(docs_of(&[doc]), cfg).map_err(|e| e.to_string())?;
            let ts = [example("x", src, tgt)];
            let (_, report) = decontaminate(&ts, &idx, &cfg).map_err(|e| e.to_string())?;
            let removed = !report.removed_ids.is_empty();
            // sub-8 matches can never count, so 10-token fields need special handling
            let expect = if matched < 8 { false } else { expect_removed };
            ensure!(removed == expect, "{matched}/{len}: removed={removed}");
            checked.push(format!("{matched}/{len}"));
        }
    }
    ensure!(
        checked.iter().any(|c| c == "14/20") && checked.iter().any(|c| c == "15/20"),
        "boundary cases missing"
    );
    Ok(format!(
        "exact 70% kept, +1 token removed for lengths 20, 30, 100 ({})",
        checked.join(" ")
    ))
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = ScanConfig::default();
    let mut rng = Lcg(0xACCE_0003);
    let n = 500usize;
    let examples: Vec<TestExample> = (0..n)
        .map(|i| {
            let a = 12 + rng.below(30) as usize;
            let b = 12 + rng.below(30) as usize;
            example(
                &format!("ex{i:03}"),
                rng.tokens(a, 1 << 30),
                rng.tokens(b, 1 << 30),
            )
        })
        .collect();
    let mut planted = Vec::new();
    let mut corpus: Vec<Vec<u32>> = (0..2000).map(|_| rng.tokens(200, 1 << 30)).collect();
    while planted.len() < n / 10 {
        let i = rng.below(n as u64) as usize;
        if planted.contains(&i) {
            continue;
        }
        let ex = &examples[i];
        let host = rng.below(corpus.len() as u64) as usize;
        let at = rng.below(100) as usize;
        let which = planted.len() % 3;
        let mut insert: Vec<u32> = Vec::new();
        if which != 1 {
            insert.extend(ex.source_tokens.iter());
        }
        if which != 0 {
            insert.push(7);
            insert.extend(ex.target_tokens.iter());
        }
        corpus[host].splice(at..at, insert);
        planted.push(i);
    }
    let idx = build_index(docs_of(&corpus), cfg).map_err(|e| e.to_string())?;
    let (kept, report) = decontaminate(&examples, &idx, &cfg).map_err(|e| e.to_string())?;
    let mut expected: Vec<String> = planted
        .iter()
        .map(|&i| examples[i].example_id.clone())
        .collect();
    expected.sort();
    let mut removed = report.removed_ids.clone();
    removed.sort();
    let tp = removed.iter().filter(|r| expected.contains(r)).count();
    let precision = tp as f64 / removed.len().max(1) as f64;
    let recall = tp as f64 / expected.len() as f64;
    ensure!(
        precision == 1.0 && recall == 1.0,
        "precision {precision}, recall {recall}"
    );
    ensure!(kept.len() == n - expected.len(), "kept {}", kept.len());
    within(
        start,
        Duration::from_secs(30),
        format!(
            "{} planted of {n}, precision 1.0, recall 1.0",
            expected.len()
        ),
    )
}

fn schedule_invariants() -> Outcome {
    let start = Instant::now();
    let cfg = TrainingConfig {
        total_steps: 1000,
        batch_size: 64,
        seed: 11,
        ..TrainingConfig::default()
    };
    ensure!(cfg.slot_cap() == 3, "cap {}", cfg.slot_cap());
    let mut plans = 0;
    for mode in ContaminationMode::ALL {
        for temporal in Temporal::ALL {
            for copies in [1u32, 10, 100] {
                // the late window holds 300 documents, so 100 copies fit one example
                let n = if copies == 100 { 1 } else { 5 };
                let examples: Vec<TestExample> = (0..n)
                    .map(|i| example(&format!("e{i}"), vec![i, 1, 2], vec![i, 3, 4]))
                    .collect();
                let cond = ContaminationCondition::new(mode, temporal, copies);
                let s = plan_schedule(&examples, cond, &cfg).map_err(|e| format!("{cond}: {e}"))?;
                let report = verify_schedule(&s, &cfg);
                ensure!(report.is_ok(), "{cond}: {}", report.summary());
                ensure!(
                    s.entries.len() == n as usize * copies as usize * mode.arity(),
                    "{cond}: entry count"
                );
                let mut per_step: BTreeMap<usize, usize> = BTreeMap::new();
                for e in &s.entries {
                    *per_step.entry(e.step).or_default() += 1;
                    let ok = match temporal {
                        Temporal::Early => e.step >= 300,
                        Temporal::Middle => e.step >= 600,
                        Temporal::Late => e.step >= 900,
                        Temporal::Uniform => (300..=900).contains(&e.step),
                    };
                    ensure!(ok && e.step < 1000, "{cond}: step {}", e.step);
                }
                ensure!(per_step.values().all(|&c| c <= 3), "{cond}: cap exceeded");
                let mut halves: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
                for e in &s.entries {
                    halves
                        .entry((e.example_id.as_str(), e.copy_index))
                        .or_default()
                        .push(e.step);
                }
                for steps in halves.values() {
                    match mode {
                        ContaminationMode::BatchedPair => ensure!(
                            steps.len() == 2 && steps[0] == steps[1],
                            "{cond}: halves apart"
                        ),
                        ContaminationMode::SplitPair => ensure!(
                            steps.len() == 2 && steps[0] != steps[1],
                            "{cond}: halves together"
                        ),
                        _ => ensure!(steps.len() == 1, "{cond}: arity"),
                    }
                }
                plans += 1;
            }
        }
    }
    ensure!(plans == 60, "{plans} plans");
    within(
        start,
        Duration::from_secs(60),
        format!("{plans} plans, 0 violations"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let examples: Vec<TestExample> = (0..7)
        .map(|i| example(&format!("e{i}"), vec![i, 5, 6], vec![i, 8]))
        .collect();
    let cfg = TrainingConfig {
        total_steps: 2000,
        batch_size: 512,
        seed: 1234,
        ..TrainingConfig::default()
    };
    let mut files = Vec::new();
    for run in 0..2 {
        for mode in ContaminationMode::ALL {
            let s = plan_schedule(
                &examples,
                ContaminationCondition::new(mode, Temporal::Uniform, 10),
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            let p = dir.path().join(format!("{run}-{mode}.jsonl"));
            save_schedule(&s, &p).map_err(|e| e.to_string())?;
            files.push(fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    let (a, b) = files.split_at(ContaminationMode::ALL.len());
    ensure!(a == b, "schedule files differ between runs");

    let mut rng = Lcg(5);
    let shards = dir.path().join("shards");
    fs::create_dir(&shards).map_err(|e| e.to_string())?;
    for s in 0..3 {
        let docs: Vec<CorpusDocument> = (0..200)
            .map(|i| CorpusDocument::new(format!("s{s}d{i}"), rng.tokens(150, 12)))
            .collect();
        contamkit::corpus_io::write_corpus(
            &shards.join(format!("{s}.jsonl")),
            contamkit::corpus_io::CorpusFormat::Jsonl,
            &docs,
        )
        .map_err(|e| e.to_string())?;
    }
    let mut builds = Vec::new();
    for run in 0..2 {
        let idx = build_index_from_path(
            &shards,
            contamkit::corpus_io::CorpusFormat::Jsonl,
            ScanConfig::default(),
            IndexOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let p = dir.path().join(format!("idx{run}"));
        idx.save(&p).map_err(|e| e.to_string())?;
        builds.push(fs::read(&p).map_err(|e| e.to_string())?);
    }
    ensure!(builds[0] == builds[1], "index files differ between runs");
    Ok(format!(
        "5 schedule files and a {}-byte index identical across runs",
        builds[0].len()
    ))
}

fn bleu_oracle() -> Outcome {
    let mut rng = Lcg(0xACCE_0006);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let segs = 1 + rng.below(6) as usize;
        let alphabet = 2 + rng.below(6) as u32;
        let mut h = Vec::new();
        let mut r = Vec::new();
        for _ in 0..segs {
            let hl = rng.below(15) as usize;
            let rl = 1 + rng.below(15) as usize;
            h.push(rng.tokens(hl, alphabet));
            r.push(rng.tokens(rl, alphabet));
        }
        let add_one = i % 2 == 1;
        let cfg = BleuConfig {
            max_order: 4,
            smoothing: if add_one {
                Smoothing::AddOne
            } else {
                Smoothing::None
            },
        };
        let got = corpus_bleu(&h, &r, cfg).map_err(|e| e.to_string())?;
        let diff = (got - brute_bleu(&h, &r, 4, add_one)).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-9, "corpus {i}: diff {diff}");
    }
    let closed = corpus_bleu(
        &[vec![1u32, 2, 3, 4]],
        &[vec![1u32, 2, 3, 4, 5]],
        BleuConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        (closed - 100.0 * (-0.25f64).exp()).abs() <= 1e-6,
        "closed form {closed}"
    );
    let h = vec![vec![4u32, 8, 15, 16, 23, 42], vec![1, 2]];
    let id = corpus_bleu(&h, &h, BleuConfig::default()).map_err(|e| e.to_string())?;
    ensure!(id == 100.0, "identity {id}");
    Ok(format!(
        "500 corpora within {worst:.1e}; closed form {closed:.6}; identity 100"
    ))
}

fn fixture_analytics() -> Outcome {
    let rows = score_table();
    let full = ContaminationMode::FullPrompted;
    let t = table_impact(&rows, "8B", "wmt23", Temporal::Late, 1, full);
    let de = t.cell(&"en-de".parse().unwrap()).ok_or("no en-de cell")?;
    ensure!((de.delta - 3.39).abs() < 1e-9, "delta {}", de.delta);

    let a = table_impact(&rows, "8B", "wmt23", Temporal::Late, 100, full);
    let b = table_impact(&rows, "8B", "wmt24", Temporal::Late, 100, full);
    let gaps = testset_gap(&a.cells, &b.cells).map_err(|e| e.to_string())?;
    let gap = gaps
        .iter()
        .find(|g| g.lang_pair.to_string() == "en-de")
        .ok_or("no en-de gap")?
        .gap;
    ensure!((gap - 14.47).abs() < 1e-9, "gap {gap}");

    let mut dir_notes = Vec::new();
    for model in ["1B", "8B"] {
        for copies in [1u32, 10, 100] {
            let cells: Vec<_> = table_impact(&rows, model, "wmt23", Temporal::Late, copies, full)
                .cells
                .into_iter()
                .filter(|c| CONTAMINATED_PAIRS.contains(&c.lang_pair.to_string().as_str()))
                .collect();
            let g = direction_group(&cells);
            let (ex, xe) = (
                g[&Direction::EnToX].mean_pct.unwrap(),
                g[&Direction::XToEn].mean_pct.unwrap(),
            );
            ensure!(ex > xe, "{model} x{copies}: En->X {ex:.3} <= X->En {xe:.3}");
            if model == "8B" {
                dir_notes.push(format!("x{copies} {ex:.2}>{xe:.2}"));
            }

            let mean = |mode| {
                let c = table_impact(&rows, model, "wmt23", Temporal::Late, copies, mode).cells;
                c.iter().map(|c| c.delta).sum::<f64>() / c.len() as f64
            };
            let (f, s, tg) = (
                mean(full),
                mean(ContaminationMode::SourceOnly),
                mean(ContaminationMode::TargetOnly),
            );
            ensure!(
                f > s && f > tg,
                "{model} x{copies}: full {f:.3}, source {s:.3}, target {tg:.3}"
            );
        }
    }
    Ok(format!(
        "delta 3.39, gap 14.47, 8B direction pct {}, full > source/target for 1/10/100 copies",
        dir_notes.join(" ")
    ))
}

fn stream_application() -> Outcome {
    let (steps, batch) = (1000usize, 64usize);
    let grid: Vec<Vec<CorpusDocument>> = (0..steps)
        .map(|st| {
            (0..batch)
                .map(|sl| {
                    let cat = if (st + sl) % 4 == 0 {
                        Category::Parallel
                    } else {
                        Category::Monolingual
                    };
                    CorpusDocument::new(format!("{st}/{sl}"), vec![st as u32, sl as u32])
                        .with_category(cat)
                })
                .collect()
        })
        .collect();
    let stream = BatchStream::new(batch, grid).map_err(|e| e.to_string())?;
    let examples: Vec<TestExample> = (0..5)
        .map(|i| example(&format!("e{i}"), vec![i, 1], vec![i, 2]))
        .collect();
    let cfg = TrainingConfig {
        total_steps: steps,
        batch_size: batch,
        seed: 8,
        ..TrainingConfig::default()
    };
    let s = plan_schedule_with(
        &examples,
        ContaminationCondition::new(ContaminationMode::FullPrompted, Temporal::Middle, 10),
        &cfg,
        &PlanOptions::for_stream(&stream),
    )
    .map_err(|e| e.to_string())?;
    ensure!(s.entries.len() == 50, "{} entries", s.entries.len());
    let out = apply(&stream, &s).map_err(|e| e.to_string())?;
    let mut changed = 0;
    for st in 0..steps {
        changed += (0..batch)
            .filter(|&sl| out.steps[st][sl] != stream.steps[st][sl])
            .count();
        let par = |b: &BatchStream| {
            b.steps[st]
                .iter()
                .filter(|d| d.category.counts_as_parallel())
                .count()
        };
        ensure!(
            par(&out) == par(&stream),
            "step {st}: parallel count changed"
        );
    }
    ensure!(changed == 50, "{changed} slots changed");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (p1, p2) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_stream(&out, &p1).map_err(|e| e.to_string())?;
    let back = read_stream(&p1).map_err(|e| e.to_string())?;
    ensure!(back == out, "stream read back differs");
    write_stream(&back, &p2).map_err(|e| e.to_string())?;
    ensure!(
        fs::read(&p1).ok() == fs::read(&p2).ok(),
        "stream files differ"
    );
    let (s1, s2) = (dir.path().join("s1"), dir.path().join("s2"));
    save_schedule(&s, &s1).map_err(|e| e.to_string())?;
    let loaded = load_schedule(&s1).map_err(|e| e.to_string())?;
    ensure!(loaded == s, "schedule read back differs");
    save_schedule(&loaded, &s2).map_err(|e| e.to_string())?;
    ensure!(
        fs::read(&s1).ok() == fs::read(&s2).ok(),
        "schedule files differ"
    );
    Ok("50 slots changed, parallel count per batch preserved, stream and schedule files round-trip".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("matcher oracle equivalence", matcher_oracle),
        ("threshold semantics", threshold_semantics),
        ("planted decontamination recovery", planted_recovery),
        ("schedule invariants", schedule_invariants),
        ("determinism", determinism),
        ("BLEU oracle", bleu_oracle),
        ("fixture analytics", fixture_analytics),
        ("stream application", stream_application),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("acceptance {}: PASS {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {}: FAIL {name} ({why})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
