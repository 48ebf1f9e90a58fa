//! Acceptance checks, one line per criterion. Runs without the libtest harness
//! so that the checks execute sequentially and their timings are meaningful.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use morphseg::corpus::Corpus;
use morphseg::eval::{align_word, evaluate, DistanceTable, EmAlignConfig, Label};
use morphseg::mdl::{train_online_traced, ChunkStore, DreamConfig, MdlConfig};
use morphseg::ml::{
    reject, sample_poisson, train_em, viterbi_segment, EmConfig, MorphStats, RejectReason, Segmentation, Verdict,
};
use morphseg::pipeline::{run_comparison, CompareConfig};
use morphseg::report::format_table;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_secs) {
        Err(format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cost_bookkeeping() -> Outcome {
    let corpus = common::english_like(10_000, 1500, 1).corpus();
    let start = Instant::now();
    let (store, _) = train_online_traced(&corpus, &MdlConfig::default()).map_err(|e| e.to_string())?;
    let tracked = store.tracked_cost().total_bits;
    let fresh = store.total_cost().total_bits;
    let elapsed = start.elapsed();
    let rel = (tracked - fresh).abs() / fresh;
    ensure(rel <= 1e-9, || {
        format!("tracked {tracked} vs recomputed {fresh}, relative error {rel:e}")
    })?;
    within(elapsed, 10)?;
    Ok(format!(
        "relative error {rel:.1e} over {} tokens, {:.2}s",
        corpus.len(),
        elapsed.as_secs_f64()
    ))
}

fn exhaustive_minimum(word: &str, stats: &MorphStats) -> Option<f64> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut cost = 0.0;
        let mut start = 0;
        let mut ok = true;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let morph: String = chars[start..end].iter().collect();
                match stats.cost(&morph) {
                    Some(c) => cost += c,
                    None => {
                        ok = false;
                        break;
                    }
                }
                start = end;
            }
        }
        if ok && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

fn viterbi_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut unsegmentable = 0;
    for instance in 0..1000 {
        let len = rng.random_range(1..=10);
        let word: String = (0..len).map(|_| *b"abc".choose(&mut rng).unwrap() as char).collect();
        let chars: Vec<char> = word.chars().collect();
        let mut counts: HashMap<String, u64> = HashMap::new();
        for _ in 0..rng.random_range(1..=12) {
            let a = rng.random_range(0..len);
            let b = rng.random_range(a + 1..=len);
            counts.insert(chars[a..b].iter().collect(), rng.random_range(1..=50));
        }
        counts.insert("zz".into(), rng.random_range(1..=50));
        let stats = MorphStats::from_counts(counts);
        let got = viterbi_segment(&word, &stats).map(|(m, c)| {
            assert_eq!(m.concat(), word);
            c
        });
        let want = exhaustive_minimum(&word, &stats);
        if want.is_none() {
            unsegmentable += 1;
        }
        ensure(got == want, || {
            format!("instance {instance} ({word}): viterbi {got:?}, exhaustive {want:?}")
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, 5)?;
    Ok(format!(
        "1000 instances ({unsegmentable} unsegmentable) exact, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn brute_force_alignment(n: usize, m: usize, cell: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn walk(i: usize, j: usize, acc: f64, n: usize, m: usize, cell: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        let acc = acc + cell(i, j);
        if i == n - 1 && j == m - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < n && j + 1 < m {
            walk(i + 1, j + 1, acc, n, m, cell, best);
        }
        if i + 1 < n {
            walk(i + 1, j, acc, n, m, cell, best);
        }
        if j + 1 < m {
            walk(i, j + 1, acc, n, m, cell, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, 0.0, n, m, cell, &mut best);
    best
}

fn alignment_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    for instance in 0..500 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let morphs: Vec<String> = (0..n).map(|i| format!("m{}", i + rng.random_range(0..2))).collect();
        let labels: Vec<Label> = (0..m)
            .map(|j| {
                if rng.random_bool(0.5) {
                    Label::base(format!("b{j}"))
                } else {
                    Label::tag(format!("T{}", rng.random_range(0..3)))
                }
            })
            .collect();
        let mut table = DistanceTable::new(rng.random_range(5.0..15.0));
        for morph in &morphs {
            for label in &labels {
                if rng.random_bool(0.7) {
                    table.insert(morph.clone(), label.text.clone(), rng.random_range(0.0..8.0));
                }
            }
        }
        let (alignment, got) = align_word(&morphs, &labels, &table);
        ensure(alignment.is_valid(n, m), || {
            format!("instance {instance}: invalid path {:?}", alignment.pairs)
        })?;
        let want = brute_force_alignment(n, m, &|i, j| table.distance(&morphs[i], &labels[j].text));
        ensure(got == want, || {
            format!("instance {instance}: dp {got}, brute force {want}")
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, 5)?;
    Ok(format!("500 instances exact, {:.2}s", elapsed.as_secs_f64()))
}

fn em_monotonicity() -> Outcome {
    let corpus = common::english_like(5_000, 800, 4).corpus();
    let config = EmConfig {
        reject: false,
        iterations: 10,
        ..EmConfig::default()
    };
    let start = Instant::now();
    let em = train_em(&corpus, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let h = &em.cost_history;
    ensure(h.len() == 11, || format!("expected 11 costs, got {}", h.len()))?;
    for (i, w) in h.windows(2).enumerate() {
        ensure(w[1] <= w[0] + 1e-9, || {
            format!("iteration {}: cost rose from {} to {}", i + 1, w[0], w[1])
        })?;
    }
    within(elapsed, 10)?;
    Ok(format!(
        "ml cost {:.0} -> {:.0} bits, {:.2}s",
        h[0],
        h[10],
        elapsed.as_secs_f64()
    ))
}

fn rejection_fixtures() -> Outcome {
    let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let usage: HashMap<String, u64> = [("halua", 3), ("halu", 4), ("a", 9), ("n", 20), ("talo", 1)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    ensure(reject(&strs(&["halua", "n"]), &usage) == Verdict::Accept, || {
        "[halua, n] not accepted".into()
    })?;
    ensure(
        reject(&strs(&["halu", "a", "n"]), &usage) == Verdict::Reject(RejectReason::OneLetterSequence),
        || "[halu, a, n] not rejected as a one-letter sequence".into(),
    )?;
    ensure(
        reject(&strs(&["talo", "n"]), &usage) == Verdict::Reject(RejectReason::RareMorph("talo".into())),
        || "[talo, n] not rejected for the rare morph".into(),
    )?;
    Ok("accept [halua,n]; reject [halu,a,n] and a morph used by one type".into())
}

fn poisson_mean() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let sum: u64 = (0..n).map(|_| sample_poisson(&mut rng, 5.5)).sum();
    let mean = sum as f64 / n as f64;
    ensure((5.4..=5.6).contains(&mean), || format!("mean {mean}"))?;
    Ok(format!("mean {mean:.4} over {n} draws"))
}

fn dreaming_effect() -> Outcome {
    let (corpus, _, source) = common::english_corpus(60_000, 7);
    ensure(corpus.len() >= 50_000, || {
        format!("corpus has only {} tokens", corpus.len())
    })?;
    let start = Instant::now();
    let (_, trace) = train_online_traced(&corpus, &MdlConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(!trace.dreams.is_empty(), || "no dream happened".into())?;
    for d in &trace.dreams {
        let (before, after) = (
            d.cost_before / d.tokens_processed as f64,
            d.cost_after / d.tokens_processed as f64,
        );
        ensure(after <= before, || {
            format!(
                "dream at {} tokens raised the average word cost {before} -> {after}",
                d.tokens_processed
            )
        })?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("cost_curve.csv");
    fs::write(&path, trace.curve_csv()).map_err(|e| e.to_string())?;
    let csv = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    ensure(csv.starts_with("tokens_processed,avg_word_cost_bits\n"), || {
        "bad CSV header".into()
    })?;
    let rows = csv.lines().count() - 1;
    ensure(rows >= corpus.len() / 1000, || format!("CSV has only {rows} rows"))?;
    within(elapsed, 120)?;
    let last = trace.dreams.last().unwrap();
    let n = last.tokens_processed as f64;
    Ok(format!(
        "{} {} tokens, {} dreams, last dream {:.3} -> {:.3} bits/word, {rows} CSV rows, {:.2}s",
        corpus.len(),
        source,
        trace.dreams.len(),
        last.cost_before / n,
        last.cost_after / n,
        elapsed.as_secs_f64()
    ))
}

fn identity(corpus: &Corpus) -> Segmentation {
    corpus
        .type_counts()
        .keys()
        .map(|w| (w.clone(), vec![w.clone()]))
        .collect()
}

fn identity_pathology() -> Outcome {
    let synth = common::english_like(20_000, 3000, 8);
    let corpus = synth.corpus();
    let gold = synth.gold();
    let (train, test) = morphseg::corpus::split_corpus(&corpus, 15_000, 5_000).map_err(|e| e.to_string())?;
    let new_types = test
        .type_counts()
        .keys()
        .filter(|w| !train.type_counts().contains_key(*w))
        .count();
    ensure(new_types > 0, || "held-out part has no new word types".into())?;
    let detail = evaluate(
        &identity(&train),
        train.type_counts(),
        &identity(&test),
        test.type_counts(),
        &gold,
        &EmAlignConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let s = &detail.summary;
    ensure(s.training_distance == 0.0, || {
        format!("training distance {}", s.training_distance)
    })?;
    ensure(s.alignment_distance > 0.0, || {
        format!("test distance {}", s.alignment_distance)
    })?;
    Ok(format!(
        "training distance 0, test distance {:.0} with {new_types} new types ({:.1}% unseen pairs)",
        s.alignment_distance,
        100.0 * s.unseen_pair_fraction
    ))
}

fn desk_scale_comparison() -> Outcome {
    let (corpus, gold, source) = common::english_corpus(110_000, 9);
    let test_tokens = 10_000.min(corpus.len() / 10);
    let config = CompareConfig {
        train_tokens: corpus.len() - test_tokens,
        test_tokens,
        measure_time: true,
        ..CompareConfig::default()
    };
    let gold = (!gold.is_empty()).then_some(gold);
    let cmp = run_comparison(&corpus, gold.as_ref(), &config).map_err(|e| e.to_string())?;
    let mdl = &cmp.reports[0];
    let types = cmp.train.num_types();
    for line in format_table(&cmp.reports).lines() {
        println!("      {line}");
    }
    ensure(mdl.codebook_morphs < types, || {
        format!("codebook has {} morphs for {types} training types", mdl.codebook_morphs)
    })?;
    ensure(mdl.relative_codebook_cost < 0.25, || {
        format!("relative codebook cost {:.2}%", 100.0 * mdl.relative_codebook_cost)
    })?;
    within(cmp.mdl.training_time, 300)?;
    Ok(format!(
        "{} {source} training tokens: {} morphs < {types} types, relative codebook cost {:.2}%, trained in {:.2}s",
        cmp.train.len(),
        mdl.codebook_morphs,
        100.0 * mdl.relative_codebook_cost,
        cmp.mdl.training_time.as_secs_f64()
    ))
}

fn run_compare(dir: &Path, corpus: &Path, gold: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let out_dir = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_morphseg"))
        .args([
            "compare",
            "--train-tokens",
            "15000",
            "--test-tokens",
            "5000",
            "--seed",
            "11",
            "--no-time",
        ])
        .arg("--corpus")
        .arg(corpus)
        .arg("--gold")
        .arg(gold)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--dream-interval")
        .arg("5000")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(output.status.success(), || {
        format!("compare failed: {}", String::from_utf8_lossy(&output.stderr))
    })?;
    let mut files = BTreeMap::new();
    files.insert("<stdout>".to_string(), output.stdout);
    for entry in fs::read_dir(&out_dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let synth = common::english_like(20_000, 2000, 10);
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for dir in [&a, &b] {
        fs::write(dir.path().join("corpus.txt"), synth.text()).map_err(|e| e.to_string())?;
        fs::write(dir.path().join("gold.txt"), &synth.gold_text).map_err(|e| e.to_string())?;
    }
    let first = run_compare(a.path(), &a.path().join("corpus.txt"), &a.path().join("gold.txt"))?;
    let second = run_compare(b.path(), &b.path().join("corpus.txt"), &b.path().join("gold.txt"))?;
    ensure(first.keys().eq(second.keys()), || "runs wrote different files".into())?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    ensure(
        first.contains_key("rec-mdl.model") && first.contains_key("report.jsonl"),
        || "model or report missing".into(),
    )?;
    Ok(format!("{} outputs byte-identical across two runs", first.len()))
}

fn count_flow_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pool: Vec<String> = (0..400)
        .map(|_| {
            let len = rng.random_range(1..=9);
            (0..len).map(|_| *b"abcde".choose(&mut rng).unwrap() as char).collect()
        })
        .collect();
    let mut store = ChunkStore::default();
    let mut dreams = 0;
    for op in 0..10_000 {
        if rng.random_bool(0.01) {
            let mut dream_rng = ChaCha8Rng::seed_from_u64(rng.random());
            store.dream(&mut dream_rng, &DreamConfig::default());
            dreams += 1;
        } else {
            // Squaring skews the choice towards the front of the pool.
            let idx = (rng.random::<f64>().powi(2) * pool.len() as f64) as usize;
            store.process_word(&pool[idx]).map_err(|e| e.to_string())?;
        }
        store
            .check_consistency()
            .map_err(|e| format!("after operation {op}: {e}"))?;
    }
    Ok(format!(
        "10000 operations ({dreams} dreams), {} chunks, invariant held throughout",
        store.num_chunks()
    ))
}

fn main() -> ExitCode {
    let checks: [Check; 11] = [
        ("cost bookkeeping oracle", cost_bookkeeping),
        ("viterbi optimality oracle", viterbi_optimality),
        ("alignment DP oracle", alignment_optimality),
        ("EM monotonicity without rejection", em_monotonicity),
        ("rejection fixtures", rejection_fixtures),
        ("poisson sampler mean", poisson_mean),
        ("dreaming effect", dreaming_effect),
        ("identity segmenter pathology", identity_pathology),
        ("desk-scale comparison", desk_scale_comparison),
        ("compare determinism", determinism),
        ("count-flow invariant fuzz", count_flow_fuzz),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let number = i + 1;
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || *f == number.to_string())
        {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{number:>2}] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{number:>2}] {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
