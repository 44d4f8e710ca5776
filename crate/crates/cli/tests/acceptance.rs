//! Acceptance suite: one test per shipping criterion, each printing a
//! pass/fail line. Tolerances are pinned in the assertions.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use leakscan_core::analytics::{
    blocklist_coverage, contamination_stats, recall_buckets, split_accuracy, Direction,
    PredictionRecord,
};
use leakscan_core::benchmark::{verbalize, BenchmarkItem, QueryVariant};
use leakscan_core::classifier::{ContaminationStatus, ContaminationVerdict, VerdictEvidence};
use leakscan_core::discovery::cache::DiskCache;
use leakscan_core::discovery::cdx::CrawlRange;
use leakscan_core::discovery::ratelimit::{Clock, ManualClock, RateLimiter};
use leakscan_core::discovery::{fixture_backends, DiscoveryConfig, DiscoveryEngine, FixtureDoc};
use leakscan_core::pipeline::{
    artifact, build_engine, run_pipeline, BenchmarkSource, ProviderKind, RunConfig, Stage,
};
use leakscan_core::synthetic::{self, PlantKind, SyntheticSpec};
use leakscan_core::text_match::{meteor_align, TokenSequence};
use leakscan_core::Split;

fn pass(number: u8, label: &str) {
    // stdout is captured unless --nocapture; stderr lines always surface on failure
    println!("acceptance criterion {number} ({label}): pass");
    eprintln!("acceptance criterion {number} ({label}): pass");
}

// ---------------------------------------------------------------- criterion 1

fn chunks_of(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        let extends = prev
            .map(|(pi, pj)| i == pi + 1 && j == pj + 1)
            .unwrap_or(false);
        if !extends {
            chunks += 1;
        }
        prev = Some((i, j));
    }
    chunks
}

/// Exhaustive enumeration of all one-to-one exact-unigram alignments,
/// maximizing matches then minimizing chunks.
fn brute_force_align(query: &[String], window: &[String]) -> (usize, usize) {
    fn dfs(
        query: &[String],
        window: &[String],
        i: usize,
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == query.len() {
            let m = pairs.len();
            let c = chunks_of(pairs);
            if m > best.0 || (m == best.0 && c < best.1) {
                *best = (m, c);
            }
            return;
        }
        dfs(query, window, i + 1, used, pairs, best);
        for j in 0..window.len() {
            if !used[j] && window[j] == query[i] {
                used[j] = true;
                pairs.push((i, j));
                dfs(query, window, i + 1, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    dfs(
        query,
        window,
        0,
        &mut vec![false; window.len()],
        &mut Vec::new(),
        &mut best,
    );
    if best.0 == 0 {
        best.1 = 0;
    }
    (best.0, best.1)
}

#[test]
fn criterion_1_meteor_oracle_equivalence() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1001);
    for case in 0..1000 {
        let alphabet = rng.random_range(1..=5);
        let qlen = rng.random_range(0..=8);
        let wlen = rng.random_range(0..=8);
        let q: Vec<String> = (0..qlen)
            .map(|_| format!("t{}", rng.random_range(0..alphabet)))
            .collect();
        let w: Vec<String> = (0..wlen)
            .map(|_| format!("t{}", rng.random_range(0..alphabet)))
            .collect();
        let expected = brute_force_align(&q, &w);
        let al = meteor_align(
            &TokenSequence::from_tokens(q.clone()),
            &TokenSequence::from_tokens(w.clone()),
        );
        assert_eq!(
            (al.matched, al.chunks),
            expected,
            "case {case}: q={q:?} w={w:?}"
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "1000 oracle comparisons took {elapsed:?}"
    );
    pass(1, "meteor oracle equivalence, 1000 pairs under a minute");
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_planted_contamination_recall() {
    let started = Instant::now();
    let spec = SyntheticSpec::default();
    let set = synthetic::generate(&spec);
    assert_eq!(set.docs.len(), 10_000);
    assert_eq!(set.items.len(), 400);

    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    let bench_path = dir.path().join("bench.jsonl");
    synthetic::write_corpus(&set.docs, &corpus_path).unwrap();
    synthetic::write_items(&set.items, &bench_path).unwrap();

    let config = RunConfig {
        benchmarks: vec![BenchmarkSource {
            name: "synthetic".into(),
            split: Split::Test,
            path: bench_path,
        }],
        provider: ProviderKind::Mock,
        corpus: Some(corpus_path),
        crawl_range: "2017-01..2020-52".into(),
        threshold: 0.75,
        cache_dir: dir.path().join("cache"),
        output_dir: dir.path().join("out"),
        ..RunConfig::default()
    };
    let engine = build_engine(&config).unwrap();
    let summary = run_pipeline(&config, &engine, &Stage::ALL).unwrap();
    assert!(!summary.partial);

    let verdict_text = fs::read_to_string(config.output_dir.join(artifact::VERDICTS)).unwrap();
    let verdicts: Vec<ContaminationVerdict> = verdict_text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut flagged = std::collections::HashMap::new();
    for v in &verdicts {
        flagged.insert(v.item_id.as_str(), v.status.is_dirty());
    }
    let count = |kind: PlantKind, dirty: bool| {
        set.truth
            .iter()
            .filter(|(id, k)| **k == kind && flagged[id.as_str()] == dirty)
            .count()
    };
    let verbatim_hit = count(PlantKind::Verbatim, true);
    let perturbed_hit = count(PlantKind::Perturbed, true);
    let distractor_hit = count(PlantKind::Distractor, true);
    assert!(
        verbatim_hit as f64 >= 0.99 * 200.0,
        "verbatim recall {verbatim_hit}/200"
    );
    assert!(
        perturbed_hit as f64 >= 0.90 * 100.0,
        "perturbed recall {perturbed_hit}/100"
    );
    assert!(
        distractor_hit as f64 <= 0.01 * 100.0,
        "distractor false positives {distractor_hit}/100"
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(300),
        "offline 10k-document run took {elapsed:?}"
    );
    pass(2, "planted-contamination recall on the 10k-document corpus");
}

// ---------------------------------------------------------------- criterion 3

fn verdict_fixture(
    benchmark: &str,
    total: usize,
    online: usize,
    input_only: usize,
    input_and_label: usize,
) -> Vec<ContaminationVerdict> {
    (0..total)
        .map(|i| {
            let status = if i < input_and_label {
                ContaminationStatus::InputAndLabel
            } else if i < input_and_label + input_only {
                ContaminationStatus::InputOnly
            } else {
                ContaminationStatus::Clean
            };
            ContaminationVerdict {
                item_id: format!("{benchmark}-{i}"),
                benchmark: benchmark.into(),
                split: Split::Test,
                status,
                online: i < online,
                threshold: 0.75,
                skip_reason: None,
                unresolved: None,
                label_evidence: None,
                input_evidence: None,
            }
        })
        .collect()
}

#[test]
fn criterion_3_contamination_table_arithmetic() {
    // (benchmark, total, online, input_only, input_and_label, expected pcts)
    let rows = [
        ("hellaswag", 9315, 805, 30, 775, ("8.6", "0.3", "8.3")),
        ("arc", 1172, 102, 28, 62, ("7.7", "2.4", "5.3")),
        ("commonsenseqa", 1221, 19, 0, 16, ("1.3", "0.0", "1.3")),
        ("mmlu", 11322, 1307, 355, 858, ("10.7", "3.1", "7.6")),
        ("winogrande", 1267, 13, 0, 13, ("1.0", "0.0", "1.0")),
        ("ceval", 1335, 712, 0, 3, ("0.2", "0.0", "0.2")),
    ];
    let mut verdicts = Vec::new();
    for (name, total, online, io, il, _) in &rows {
        verdicts.extend(verdict_fixture(name, *total, *online, *io, *il));
    }
    let report = contamination_stats(&verdicts);
    for (name, total, online, io, il, (dirty_pct, io_pct, il_pct)) in &rows {
        let row = report.row(name).unwrap();
        assert_eq!(row.total, *total);
        assert_eq!(row.online, *online);
        assert_eq!(row.dirty, io + il);
        assert_eq!(row.dirty_pct(), *dirty_pct, "{name} dirty pct");
        assert_eq!(row.input_only_pct(), *io_pct, "{name} input-only pct");
        assert_eq!(
            row.input_and_label_pct(),
            *il_pct,
            "{name} input-and-label pct"
        );
    }
    pass(
        3,
        "contamination statistics match the published percents exactly",
    );
}

// ---------------------------------------------------------------- criterion 4

const MODELS: [&str; 7] = [
    "llama-7b",
    "llama-13b",
    "llama-30b",
    "llama-65b",
    "llama2-7b",
    "llama2-13b",
    "llama2-70b",
];
const TABLE_BENCHMARKS: [&str; 3] = ["mmlu", "hellaswag", "arc"];
// accuracy per [benchmark][model]
const CLEAN_ACC: [[f64; 7]; 3] = [
    [0.3518, 0.4429, 0.5381, 0.6316, 0.4180, 0.5596, 0.6763],
    [0.6394, 0.7073, 0.7412, 0.7613, 0.6746, 0.8254, 0.7726],
    [0.3627, 0.3924, 0.4249, 0.4276, 0.3803, 0.4221, 0.4555],
];
const ALL_DIRTY_ACC: [[f64; 7]; 3] = [
    [0.3577, 0.4309, 0.5447, 0.5447, 0.4309, 0.5285, 0.6667],
    [0.6696, 0.7913, 0.7913, 0.8087, 0.7217, 0.8087, 0.8348],
    [0.3448, 0.3563, 0.4598, 0.4713, 0.4368, 0.4368, 0.5632],
];
const INPUT_LABEL_ACC: [[f64; 7]; 3] = [
    [0.3488, 0.4884, 0.5930, 0.6279, 0.4535, 0.5814, 0.7093],
    [0.6727, 0.7909, 0.7909, 0.8091, 0.7182, 0.8000, 0.8455],
    [0.3167, 0.3333, 0.4667, 0.4667, 0.4167, 0.4167, 0.5667],
];
const SUBSET: usize = 10_000;

#[test]
fn criterion_4_split_accuracy_arithmetic() {
    let mut items = Vec::new();
    let mut verdicts = Vec::new();
    let mut predictions = Vec::new();

    for (b, benchmark) in TABLE_BENCHMARKS.iter().enumerate() {
        let subsets = [
            ("c", ContaminationStatus::Clean),
            ("io", ContaminationStatus::InputOnly),
            ("il", ContaminationStatus::InputAndLabel),
        ];
        for (tag, status) in subsets {
            for i in 0..SUBSET {
                let id = format!("{benchmark}-{tag}-{i}");
                items.push(BenchmarkItem {
                    item_id: id.clone(),
                    benchmark: benchmark.to_string(),
                    split: Split::Test,
                    question: "q".into(),
                    choices: vec!["right".into(), "wrong".into()],
                    answer_index: 0,
                });
                verdicts.push(ContaminationVerdict {
                    item_id: id,
                    benchmark: benchmark.to_string(),
                    split: Split::Test,
                    status,
                    online: status != ContaminationStatus::Clean,
                    threshold: 0.75,
                    skip_reason: None,
                    unresolved: None,
                    label_evidence: None,
                    input_evidence: None,
                });
            }
        }

        for (m, model) in MODELS.iter().enumerate() {
            let clean_correct = (CLEAN_ACC[b][m] * SUBSET as f64).round() as usize;
            let il_correct = (INPUT_LABEL_ACC[b][m] * SUBSET as f64).round() as usize;
            let ad_correct = (ALL_DIRTY_ACC[b][m] * 2.0 * SUBSET as f64).round() as usize;
            let io_correct = ad_correct
                .checked_sub(il_correct)
                .expect("dirty mask arithmetic must stay in range");
            assert!(
                io_correct <= SUBSET,
                "io correct {io_correct} exceeds subset"
            );
            for (tag, correct) in [("c", clean_correct), ("io", io_correct), ("il", il_correct)] {
                for i in 0..SUBSET {
                    predictions.push(PredictionRecord {
                        item_id: format!("{benchmark}-{tag}-{i}"),
                        model: model.to_string(),
                        scores: None,
                        predicted: Some(if i < correct { 0 } else { 1 }),
                    });
                }
            }
        }
    }

    let comparison = split_accuracy(&verdicts, &predictions, &items);
    assert!(comparison.warnings.is_empty());

    // headline row: Llama-2 70B on Hellaswag
    let row = comparison.row("llama2-70b", "hellaswag").unwrap();
    assert_eq!(format!("{:.4}", row.clean.accuracy().unwrap()), "0.7726");
    assert_eq!(
        format!("{:.4}", row.all_dirty.accuracy().unwrap()),
        "0.8348"
    );
    assert_eq!(row.all_dirty_direction, Some(Direction::Up));
    assert_eq!(
        format!("{:.4}", row.input_label.accuracy().unwrap()),
        "0.8455"
    );
    assert_eq!(row.input_label_direction, Some(Direction::Up));

    // the whole average block's marker pattern
    let expected_all_dirty = [
        Direction::Up,
        Direction::Up,
        Direction::Up,
        Direction::Up,
        Direction::Up,
        Direction::Down,
        Direction::Up,
    ];
    let expected_input_label = [
        Direction::Down,
        Direction::Up,
        Direction::Up,
        Direction::Up,
        Direction::Up,
        Direction::Down,
        Direction::Up,
    ];
    for (m, model) in MODELS.iter().enumerate() {
        let avg = comparison.average(model).unwrap();
        assert_eq!(
            avg.all_dirty_direction,
            Some(expected_all_dirty[m]),
            "{model} all-dirty marker"
        );
        assert_eq!(
            avg.input_label_direction,
            Some(expected_input_label[m]),
            "{model} input-label marker"
        );
    }
    // spot-check one average value against the published block
    let avg70 = comparison.average("llama2-70b").unwrap();
    assert_eq!(format!("{:.4}", avg70.clean.unwrap()), "0.6348");
    assert_eq!(format!("{:.4}", avg70.all_dirty.unwrap()), "0.6882");
    assert_eq!(format!("{:.4}", avg70.input_label.unwrap()), "0.7072");

    pass(
        4,
        "split accuracies and the average marker pattern reproduce exactly",
    );
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_blocklist_coverage_figures() {
    fn dirty(id: &str, url: &str) -> ContaminationVerdict {
        ContaminationVerdict {
            item_id: id.into(),
            benchmark: "mmlu".into(),
            split: Split::Test,
            status: ContaminationStatus::InputAndLabel,
            online: true,
            threshold: 0.75,
            skip_reason: None,
            unresolved: None,
            label_evidence: Some(VerdictEvidence {
                url: url.into(),
                window_start: 0,
                window_end: 20,
                matched_unigrams: 18,
                chunks: 1,
                raw_recall: 0.9,
                penalized_recall: 0.9,
                crawl_ids: vec!["2018-17".into()],
            }),
            input_evidence: None,
        }
    }

    let mut verdicts = Vec::new();
    for i in 0..2 {
        verdicts.push(dirty(
            &format!("e{i}"),
            &format!("https://listed.example.org/page{i}"),
        ));
    }
    for i in 0..26 {
        verdicts.push(dirty(
            &format!("d{i}"),
            &format!("https://copy-{i}.shared-domain.example.org/q{i}"),
        ));
    }
    for i in 0..103 {
        verdicts.push(dirty(
            &format!("n{i}"),
            &format!("https://elsewhere-{i}.example.net/x"),
        ));
    }
    assert_eq!(verdicts.len(), 131);

    let blocklist = vec![
        "https://listed.example.org/page0".to_string(),
        "https://listed.example.org/page1".to_string(),
        "https://www.shared-domain.example.org/original".to_string(),
    ];
    let coverage = blocklist_coverage(&verdicts, &blocklist);
    assert_eq!(coverage.dirty_total, 131);
    assert_eq!(coverage.exact_matches, 2);
    assert_eq!(coverage.exact_pct(), "1.5");
    assert_eq!(coverage.domain_matches, 28);
    assert_eq!(coverage.domain_pct(), "21");
    pass(
        5,
        "blocklist coverage reproduces 2/131 (1.5%) and 28/131 (21%)",
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_recall_bucket_omission_and_accuracy() {
    let mut items = Vec::new();
    let mut verdicts = Vec::new();
    let mut predictions = Vec::new();
    // (bucket midpoint, n, correct): flat below 0.6, rising above; two groups
    // under the 50-item floor must be omitted
    let groups = [
        (0.05, 400, 200, "0.5000"),
        (0.15, 49, 10, "omitted"),
        (0.25, 120, 60, "0.5000"),
        (0.45, 30, 30, "omitted"),
        (0.65, 200, 130, "0.6500"),
        (0.75, 160, 120, "0.7500"),
        (0.95, 80, 72, "0.9000"),
    ];
    let mut next = 0usize;
    for (mid, n, correct, _) in groups {
        for i in 0..n {
            let id = format!("b{next}");
            next += 1;
            items.push(BenchmarkItem {
                item_id: id.clone(),
                benchmark: "fig".into(),
                split: Split::Test,
                question: "q".into(),
                choices: vec!["right".into(), "wrong".into()],
                answer_index: 0,
            });
            verdicts.push(ContaminationVerdict {
                item_id: id.clone(),
                benchmark: "fig".into(),
                split: Split::Test,
                status: if mid >= 0.75 {
                    ContaminationStatus::InputAndLabel
                } else {
                    ContaminationStatus::Clean
                },
                online: true,
                threshold: 0.75,
                skip_reason: None,
                unresolved: None,
                label_evidence: Some(VerdictEvidence {
                    url: "https://x.example/a".into(),
                    window_start: 0,
                    window_end: 10,
                    matched_unigrams: 5,
                    chunks: 1,
                    raw_recall: mid,
                    penalized_recall: mid,
                    crawl_ids: vec!["2018-17".into()],
                }),
                input_evidence: None,
            });
            predictions.push(PredictionRecord {
                item_id: id,
                model: "llama2-70b".into(),
                scores: Some(if i < correct {
                    vec![1.0, 2.0]
                } else {
                    vec![2.0, 1.0]
                }),
                predicted: None,
            });
        }
    }

    let curve = recall_buckets(&verdicts, &predictions, &items, 0.1, 50).unwrap();
    let expected_kept: Vec<(f64, usize, &str)> = groups
        .iter()
        .filter(|(_, n, _, _)| *n >= 50)
        .map(|(mid, n, _, acc)| (*mid, *n, *acc))
        .collect();
    assert_eq!(curve.buckets.len(), expected_kept.len());
    for (bucket, (mid, n, acc)) in curve.buckets.iter().zip(&expected_kept) {
        assert!(bucket.bucket_low <= *mid && *mid < bucket.bucket_high);
        assert_eq!(bucket.n, *n);
        assert_eq!(format!("{:.4}", bucket.accuracy()), *acc);
    }
    // omission is exactly the under-50 groups
    assert_eq!(curve.omitted.len(), 2);
    assert_eq!(curve.omitted[0].n, 49);
    assert_eq!(curve.omitted[1].n, 30);
    // the sanity shape: flat at 0.5 below recall 0.6, strictly rising above
    let above: Vec<f64> = curve
        .buckets
        .iter()
        .filter(|b| b.bucket_low >= 0.6)
        .map(|b| b.accuracy())
        .collect();
    assert!(above.windows(2).all(|w| w[1] > w[0]));
    pass(
        6,
        "recall buckets omit under-50 groups and match accuracies to 4 decimals",
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_verbalization_golden_example() {
    let item = BenchmarkItem {
        item_id: "mmlu-psych-act".into(),
        benchmark: "mmlu".into(),
        split: Split::Test,
        question: "The flaw in Anderson's ACT theory was that some considered it ____.".into(),
        choices: vec![
            "Only applicable to a motor system".into(),
            "untestable and thus, of uncertain scientific value".into(),
            "Lacking in definition for its elements".into(),
            "Overly complex in explaining the operation of cognition".into(),
        ],
        answer_index: 1,
    };
    let query = verbalize(&item, QueryVariant::QuestionAndAnswer, 500);
    let expected = "The flaw in Anderson's ACT theory was that some considered it \
                    untestable and thus, of uncertain scientific value.";
    assert_eq!(query.text.as_bytes(), expected.as_bytes());
    assert!(query.skipped.is_none());
    pass(
        7,
        "blank-filling verbalization is byte-identical to the worked example",
    );
}

// ---------------------------------------------------------------- criterion 8

fn write_cli_fixture(root: &Path) -> (String, String) {
    let corpus = root.join("corpus.jsonl");
    let docs = [
        serde_json::json!({
            "url": "https://quiz.example.org/a",
            "text": "Which planet hosts the largest volcano in the solar system? \
                     Mars, home of Olympus Mons, the giant shield volcano",
            "languages": "eng",
            "crawls": ["2018-17"],
        }),
        serde_json::json!({
            "url": "https://filler.example.org/b",
            "text": "Notes about sourdough baking and hydration ratios",
            "languages": "eng",
            "crawls": ["2018-17"],
        }),
    ];
    let text: String = docs.iter().map(|d| format!("{d}\n")).collect();
    fs::write(&corpus, text).unwrap();
    let bench = root.join("bench.jsonl");
    let records = [
        serde_json::json!({
            "id": "q1",
            "question": "Which planet hosts the largest volcano in the solar system?",
            "choices": ["Mars, home of Olympus Mons, the giant shield volcano", "Venus"],
            "answer": 0,
        }),
        serde_json::json!({
            "id": "q2",
            "question": "Qblorxian vmpty zzyzx frobnule?",
            "choices": ["thrumbolated", "quaxifier"],
            "answer": 0,
        }),
    ];
    let text: String = records.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&bench, text).unwrap();
    (
        corpus.to_string_lossy().into_owned(),
        bench.to_string_lossy().into_owned(),
    )
}

fn run_cli_all(root: &Path, corpus: &str, bench: &str, out: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_leakscan"))
        .env_clear()
        .args([
            "all",
            "--benchmark",
            &format!("fix:test:{bench}"),
            "--provider",
            "mock",
            "--corpus",
            corpus,
            "--cache-dir",
            root.join("cache").to_str().unwrap(),
            "--output-dir",
            root.join(out).to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .filter(|(name, _)| name != artifact::CONFIG) // embeds the output path
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_8_determinism_and_resumability() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, bench) = write_cli_fixture(dir.path());

    run_cli_all(dir.path(), &corpus, &bench, "out-a");
    run_cli_all(dir.path(), &corpus, &bench, "out-b");
    let a = artifact_bytes(&dir.path().join("out-a"));
    let b = artifact_bytes(&dir.path().join("out-b"));
    assert_eq!(
        a, b,
        "two identical runs must produce byte-identical outputs"
    );

    // delete everything downstream of match and rerun
    for name in [
        artifact::VERDICTS,
        artifact::LEDGER_CLASSIFY,
        artifact::REPORT_TSV,
        artifact::REPORT_TXT,
    ] {
        fs::remove_file(dir.path().join("out-a").join(name)).unwrap();
    }
    run_cli_all(dir.path(), &corpus, &bench, "out-a");
    let again = artifact_bytes(&dir.path().join("out-a"));
    assert_eq!(a, again, "regenerated artifacts must be bit-exact");
    pass(
        8,
        "offline runs are deterministic and stage artifacts reproduce bit-exactly",
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_discovery_contracts() {
    // rate budget under an injected clock
    let clock = Arc::new(ManualClock::new());
    let limiter = RateLimiter::new(5.0, clock.clone());
    let mut stamps = Vec::new();
    for _ in 0..20 {
        limiter.acquire();
        stamps.push(clock.now());
    }
    for pair in stamps.windows(2) {
        assert!(
            pair[1] - pair[0] >= Duration::from_millis(200),
            "rate budget exceeded"
        );
    }

    // language filter and warm-cache behavior through the engine
    let docs = vec![
        FixtureDoc {
            url: "https://en.example.org/page".into(),
            text: "shared quiz text alpha beta gamma".into(),
            html: None,
            languages: Some("eng".into()),
            crawls: vec!["2018-17".into()],
        },
        FixtureDoc {
            url: "https://fr.example.org/page".into(),
            text: "shared quiz text alpha beta gamma".into(),
            html: None,
            languages: Some("fra".into()),
            crawls: vec!["2018-17".into()],
        },
        FixtureDoc {
            url: "https://de.example.org/page".into(),
            text: "shared quiz text alpha beta gamma".into(),
            html: None,
            languages: Some("deu,fra".into()),
            crawls: vec!["2018-17".into()],
        },
        FixtureDoc {
            url: "https://unk.example.org/page".into(),
            text: "shared quiz text alpha beta gamma".into(),
            html: None,
            languages: None,
            crawls: vec!["2018-17".into()],
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let make_engine = |docs: &[FixtureDoc]| {
        let backends = fixture_backends(docs, 500);
        let provider = backends.provider.clone();
        let engine = DiscoveryEngine::new(
            backends.provider,
            backends.index,
            backends.fetcher,
            Arc::new(ManualClock::new()),
            DiskCache::new(dir.path().join("cache")).unwrap(),
            DiscoveryConfig {
                top_k: 10,
                crawl_range: "2017-01..2020-52".parse::<CrawlRange>().unwrap(),
                primary_language: "eng".into(),
                max_retries: 1,
                backoff_base: Duration::from_millis(10),
                fetch_max_bytes: 1 << 20,
                allow_crawl_absent_fetch: false,
            },
        );
        (engine, provider)
    };

    let (engine, provider) = make_engine(&docs);
    for doc in &docs {
        let presence = engine.presence_cached(&doc.url).unwrap();
        let retained = matches!(doc.languages.as_deref(), None | Some("eng"));
        assert_eq!(
            presence.present, retained,
            "{}: language filter must retain only primary or unknown",
            doc.url
        );
    }
    let hits = engine
        .search_cached("shared quiz text alpha beta gamma")
        .unwrap();
    assert_eq!(hits.len(), 4);
    assert_eq!(provider.call_count(), 1);

    // a fresh engine over the same cache performs zero network calls
    let (warm_engine, warm_provider) = make_engine(&[]);
    let warm_hits = warm_engine
        .search_cached("shared quiz text alpha beta gamma")
        .unwrap();
    assert_eq!(warm_hits, hits);
    for doc in &docs {
        warm_engine.presence_cached(&doc.url).unwrap();
    }
    assert_eq!(
        warm_provider.call_count(),
        0,
        "warm cache must not touch the provider"
    );

    pass(
        9,
        "rate budget, language filter, and warm-cache discovery contracts hold",
    );
}
