//! Deterministic synthetic corpora with planted leaks, for offline evaluation
//! of the pipeline: verbatim plants, lightly perturbed plants, and near-miss
//! distractors below the contamination threshold.

use std::collections::HashMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::benchmark::{BenchmarkItem, Split};
use crate::discovery::cache::write_atomic;
use crate::discovery::FixtureDoc;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub doc_count: usize,
    pub verbatim: usize,
    pub perturbed: usize,
    pub distractors: usize,
    pub vocab_size: usize,
    pub doc_tokens_min: usize,
    pub doc_tokens_max: usize,
    pub item_tokens_min: usize,
    pub item_tokens_max: usize,
    /// Fraction of item tokens replaced in the perturbed plants.
    pub perturb_ratio: f64,
    /// Fraction of item tokens shared with the corpus in distractors.
    pub distractor_overlap: f64,
    pub crawl_id: String,
    pub benchmark: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            doc_count: 10_000,
            verbatim: 200,
            perturbed: 100,
            distractors: 100,
            vocab_size: 5_000,
            doc_tokens_min: 120,
            doc_tokens_max: 260,
            item_tokens_min: 14,
            item_tokens_max: 40,
            perturb_ratio: 0.10,
            distractor_overlap: 0.40,
            crawl_id: "2018-17".to_string(),
            benchmark: "synthetic".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Verbatim,
    Perturbed,
    Distractor,
}

pub struct SyntheticSet {
    pub docs: Vec<FixtureDoc>,
    pub items: Vec<BenchmarkItem>,
    pub truth: HashMap<String, PlantKind>,
}

fn vocab_word(i: usize) -> String {
    format!("w{i:05}")
}

/// Reserved words never placed in corpus documents; distractors are padded
/// with these.
fn reserved_word(i: usize) -> String {
    format!("zz{i:05}")
}

fn doc_url(i: usize) -> String {
    format!("https://docs-{:02}.example.org/page/{i:05}", i % 89)
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticSet {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let plants = spec.verbatim + spec.perturbed + spec.distractors;
    assert!(spec.doc_count >= plants, "need one host document per plant");

    let mut doc_bodies: Vec<Vec<String>> = Vec::with_capacity(spec.doc_count);
    for _ in 0..spec.doc_count {
        let len = rng.random_range(spec.doc_tokens_min..=spec.doc_tokens_max);
        let body: Vec<String> = (0..len)
            .map(|_| vocab_word(rng.random_range(0..spec.vocab_size)))
            .collect();
        doc_bodies.push(body);
    }

    let mut items = Vec::new();
    let mut truth = HashMap::new();
    let mut reserved_next = 0usize;

    let make_item = |rng: &mut StdRng,
                     id: String,
                     tokens: Vec<String>,
                     benchmark: &str,
                     reserved_next: &mut usize| {
        let answer_len = (tokens.len() / 5).max(2);
        let question = tokens[..tokens.len() - answer_len].join(" ");
        let answer = tokens[tokens.len() - answer_len..].join(" ");
        let alt = format!(
            "{} {}",
            reserved_word(*reserved_next),
            reserved_word(*reserved_next + 1)
        );
        *reserved_next += 2;
        let flip: bool = rng.random();
        let (choices, answer_index) = if flip {
            (vec![alt, answer], 1)
        } else {
            (vec![answer, alt], 0)
        };
        BenchmarkItem {
            item_id: id,
            benchmark: benchmark.to_string(),
            split: Split::Test,
            question,
            choices,
            answer_index,
        }
    };

    let mut host = 0usize;
    for v in 0..spec.verbatim {
        let len = rng.random_range(spec.item_tokens_min..=spec.item_tokens_max);
        let tokens: Vec<String> = (0..len)
            .map(|_| vocab_word(rng.random_range(0..spec.vocab_size)))
            .collect();
        let at = rng.random_range(0..=doc_bodies[host].len());
        doc_bodies[host].splice(at..at, tokens.iter().cloned());
        let id = format!("v{v:04}");
        items.push(make_item(
            &mut rng,
            id.clone(),
            tokens,
            &spec.benchmark,
            &mut reserved_next,
        ));
        truth.insert(id, PlantKind::Verbatim);
        host += 1;
    }

    for p in 0..spec.perturbed {
        let len = rng.random_range(spec.item_tokens_min..=spec.item_tokens_max);
        let tokens: Vec<String> = (0..len)
            .map(|_| vocab_word(rng.random_range(0..spec.vocab_size)))
            .collect();
        let mut planted = tokens.clone();
        // floor keeps the perturbation within the stated ratio for any length
        // above 1/ratio tokens
        let flips = ((len as f64 * spec.perturb_ratio).floor() as usize).max(1);
        for _ in 0..flips {
            let pos = rng.random_range(0..planted.len());
            planted[pos] = vocab_word(rng.random_range(0..spec.vocab_size));
        }
        let at = rng.random_range(0..=doc_bodies[host].len());
        doc_bodies[host].splice(at..at, planted);
        let id = format!("p{p:04}");
        items.push(make_item(
            &mut rng,
            id.clone(),
            tokens,
            &spec.benchmark,
            &mut reserved_next,
        ));
        truth.insert(id, PlantKind::Perturbed);
        host += 1;
    }

    for d in 0..spec.distractors {
        let len = rng.random_range(spec.item_tokens_min..=spec.item_tokens_max);
        let shared = ((len as f64 * spec.distractor_overlap) as usize).max(1);
        let body_len = doc_bodies[host].len();
        let span_start = rng.random_range(0..body_len.saturating_sub(shared).max(1));
        let span: Vec<String> =
            doc_bodies[host][span_start..(span_start + shared).min(body_len)].to_vec();
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        tokens.extend(span);
        while tokens.len() < len {
            tokens.push(reserved_word(reserved_next));
            reserved_next += 1;
        }
        let id = format!("d{d:04}");
        items.push(make_item(
            &mut rng,
            id.clone(),
            tokens,
            &spec.benchmark,
            &mut reserved_next,
        ));
        truth.insert(id, PlantKind::Distractor);
        host += 1;
    }

    let docs: Vec<FixtureDoc> = doc_bodies
        .into_iter()
        .enumerate()
        .map(|(i, body)| FixtureDoc {
            url: doc_url(i),
            text: body.join(" "),
            html: None,
            languages: Some("eng".to_string()),
            crawls: vec![spec.crawl_id.clone()],
        })
        .collect();

    SyntheticSet { docs, items, truth }
}

pub fn write_corpus(docs: &[FixtureDoc], path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("doc serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_items(items: &[BenchmarkItem], path: &Path) -> std::io::Result<()> {
    let mut out = Vec::new();
    crate::benchmark::write_benchmark_items(items, &mut out)?;
    write_atomic(path, &out)
}
