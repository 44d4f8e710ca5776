//! Run-level aggregates: contamination statistics, clean/dirty accuracy
//! comparisons, recall-bucket curves, and blocklist coverage.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::BenchmarkItem;
use crate::classifier::{ContaminationStatus, ContaminationVerdict};
use crate::urlnorm::{canonical_url, registrable_domain};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("prediction for {item_id} has {got} scores but the item has {expected} choices")]
    ScoreLengthMismatch {
        item_id: String,
        got: usize,
        expected: usize,
    },
    #[error("prediction for {item_id} has neither scores nor a predicted index")]
    MissingPrediction { item_id: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Externally produced per-item model output: either per-choice scores
/// (perplexity-like, lower is better) or an already-chosen index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub item_id: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<usize>,
}

pub fn read_predictions(reader: impl BufRead) -> std::io::Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("prediction line {}: {e}", idx + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Predicted choice for a record: a provided index passes through unchanged,
/// otherwise the argmin of the scores with ties going to the lowest index.
pub fn choose_answer(
    record: &PredictionRecord,
    choice_count: usize,
) -> Result<usize, AnalyticsError> {
    if let Some(idx) = record.predicted {
        return Ok(idx);
    }
    let scores = record
        .scores
        .as_ref()
        .ok_or_else(|| AnalyticsError::MissingPrediction {
            item_id: record.item_id.clone(),
        })?;
    if scores.len() != choice_count {
        return Err(AnalyticsError::ScoreLengthMismatch {
            item_id: record.item_id.clone(),
            got: scores.len(),
            expected: choice_count,
        });
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Percent with one decimal, rounded half-up, computed in integer arithmetic
/// so table fixtures match exactly. `percent_one_decimal(805, 9315)` is "8.6".
pub fn percent_one_decimal(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.0".to_string();
    }
    let tenths = (2000 * count as u128 + total as u128) / (2 * total as u128);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// Percent at two significant figures, the convention of coverage reports:
/// `2/131` is "1.5", `28/131` is "21", `701/2000` is "35".
pub fn percent_two_sig(count: usize, total: usize) -> String {
    if count == 0 || total == 0 {
        return "0".to_string();
    }
    let (c, t) = (count as u128, total as u128);
    if 10 * c >= t {
        // >= 10%: zero decimals
        let whole = (200 * c + t) / (2 * t);
        format!("{whole}")
    } else if 100 * c >= t {
        // >= 1%: one decimal
        let tenths = (2000 * c + t) / (2 * t);
        format!("{}.{}", tenths / 10, tenths % 10)
    } else {
        let hundredths = (20000 * c + t) / (2 * t);
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

/// Per-benchmark contamination counts. Skipped and unknown items are excluded
/// from `total` and from every percentage denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub benchmark: String,
    pub total: usize,
    pub online: usize,
    pub dirty: usize,
    pub input_only: usize,
    pub input_and_label: usize,
    pub skipped: usize,
    pub unknown: usize,
}

impl BenchmarkStats {
    pub fn dirty_pct(&self) -> String {
        percent_one_decimal(self.dirty, self.total)
    }

    pub fn input_only_pct(&self) -> String {
        percent_one_decimal(self.input_only, self.total)
    }

    pub fn input_and_label_pct(&self) -> String {
        percent_one_decimal(self.input_and_label, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub rows: Vec<BenchmarkStats>,
}

impl ContaminationReport {
    pub fn row(&self, benchmark: &str) -> Option<&BenchmarkStats> {
        self.rows.iter().find(|r| r.benchmark == benchmark)
    }
}

/// Aggregates verdicts into per-benchmark counts and percents. Benchmarks
/// appear in order of first occurrence.
pub fn contamination_stats(verdicts: &[ContaminationVerdict]) -> ContaminationReport {
    let mut order: Vec<String> = Vec::new();
    let mut by_name: HashMap<String, BenchmarkStats> = HashMap::new();
    for v in verdicts {
        let stats = by_name.entry(v.benchmark.clone()).or_insert_with(|| {
            order.push(v.benchmark.clone());
            BenchmarkStats {
                benchmark: v.benchmark.clone(),
                total: 0,
                online: 0,
                dirty: 0,
                input_only: 0,
                input_and_label: 0,
                skipped: 0,
                unknown: 0,
            }
        });
        match v.status {
            ContaminationStatus::Skipped => stats.skipped += 1,
            ContaminationStatus::Unknown => stats.unknown += 1,
            status => {
                stats.total += 1;
                if v.online {
                    stats.online += 1;
                }
                match status {
                    ContaminationStatus::InputOnly => {
                        stats.input_only += 1;
                        stats.dirty += 1;
                    }
                    ContaminationStatus::InputAndLabel => {
                        stats.input_and_label += 1;
                        stats.dirty += 1;
                    }
                    _ => {}
                }
            }
        }
    }
    ContaminationReport {
        rows: order
            .into_iter()
            .map(|name| by_name.remove(&name).unwrap())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub n: usize,
    pub correct: usize,
}

impl SubsetAccuracy {
    /// `None` for an empty subset: undefined, not zero.
    pub fn accuracy(&self) -> Option<f64> {
        (self.n > 0).then(|| self.correct as f64 / self.n as f64)
    }
}

/// Whether a dirty subset out- or under-performs the clean one. Ties count as
/// `Down`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn arrow(&self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
        }
    }

    fn compare(dirty: Option<f64>, clean: Option<f64>) -> Option<Direction> {
        match (dirty, clean) {
            (Some(d), Some(c)) => Some(if d > c {
                Direction::Up
            } else {
                Direction::Down
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub model: String,
    pub benchmark: String,
    pub clean: SubsetAccuracy,
    pub all_dirty: SubsetAccuracy,
    pub input_label: SubsetAccuracy,
    pub all_dirty_direction: Option<Direction>,
    pub input_label_direction: Option<Direction>,
}

/// Unweighted mean of per-benchmark accuracies for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub model: String,
    pub clean: Option<f64>,
    pub all_dirty: Option<f64>,
    pub input_label: Option<f64>,
    pub all_dirty_direction: Option<Direction>,
    pub input_label_direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitComparison {
    pub rows: Vec<SplitRow>,
    pub averages: Vec<AverageRow>,
    pub warnings: Vec<String>,
}

impl SplitComparison {
    pub fn row(&self, model: &str, benchmark: &str) -> Option<&SplitRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.benchmark == benchmark)
    }

    pub fn average(&self, model: &str) -> Option<&AverageRow> {
        self.averages.iter().find(|r| r.model == model)
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Accuracy per (model, benchmark) over the clean, all-dirty, and
/// input-and-label subsets, plus a macro-average block per model. Skipped and
/// unknown items never join a subset; items without predictions are reported
/// as warnings.
pub fn split_accuracy(
    verdicts: &[ContaminationVerdict],
    predictions: &[PredictionRecord],
    items: &[BenchmarkItem],
) -> SplitComparison {
    let item_by_id: HashMap<&str, &BenchmarkItem> =
        items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let verdict_by_id: HashMap<&str, &ContaminationVerdict> =
        verdicts.iter().map(|v| (v.item_id.as_str(), v)).collect();

    let mut warnings = Vec::new();
    let mut benchmark_order: Vec<String> = Vec::new();
    for v in verdicts {
        if !benchmark_order.contains(&v.benchmark) {
            benchmark_order.push(v.benchmark.clone());
        }
    }

    let mut model_order: Vec<String> = Vec::new();
    // (model, benchmark) -> [clean, all_dirty, input_label] tallies
    let mut tallies: HashMap<(String, String), [SubsetAccuracy; 3]> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for pred in predictions {
        if !seen.insert((pred.model.clone(), pred.item_id.clone())) {
            warnings.push(format!(
                "duplicate prediction for item {:?} by model {:?} ignored",
                pred.item_id, pred.model
            ));
            continue;
        }
        if !model_order.contains(&pred.model) {
            model_order.push(pred.model.clone());
        }
        let Some(item) = item_by_id.get(pred.item_id.as_str()) else {
            warnings.push(format!(
                "prediction references unknown item {:?}",
                pred.item_id
            ));
            continue;
        };
        let Some(verdict) = verdict_by_id.get(pred.item_id.as_str()) else {
            warnings.push(format!("no verdict for predicted item {:?}", pred.item_id));
            continue;
        };
        if matches!(
            verdict.status,
            ContaminationStatus::Skipped | ContaminationStatus::Unknown
        ) {
            continue;
        }
        let chosen = match choose_answer(pred, item.choices.len()) {
            Ok(c) => c,
            Err(e) => {
                warnings.push(e.to_string());
                continue;
            }
        };
        let correct = chosen == item.answer_index;
        let entry = tallies
            .entry((pred.model.clone(), item.benchmark.clone()))
            .or_insert([SubsetAccuracy { n: 0, correct: 0 }; 3]);
        let mut tally = |slot: usize| {
            entry[slot].n += 1;
            if correct {
                entry[slot].correct += 1;
            }
        };
        match verdict.status {
            ContaminationStatus::Clean => tally(0),
            ContaminationStatus::InputOnly => tally(1),
            ContaminationStatus::InputAndLabel => {
                tally(1);
                tally(2);
            }
            _ => unreachable!("skipped/unknown filtered above"),
        }
    }

    let mut rows = Vec::new();
    for model in &model_order {
        for benchmark in &benchmark_order {
            let Some(t) = tallies.get(&(model.clone(), benchmark.clone())) else {
                continue;
            };
            let clean = t[0];
            let all_dirty = t[1];
            let input_label = t[2];
            rows.push(SplitRow {
                model: model.clone(),
                benchmark: benchmark.clone(),
                clean,
                all_dirty,
                input_label,
                all_dirty_direction: Direction::compare(all_dirty.accuracy(), clean.accuracy()),
                input_label_direction: Direction::compare(input_label.accuracy(), clean.accuracy()),
            });
        }
    }

    let mut averages = Vec::new();
    for model in &model_order {
        let model_rows: Vec<&SplitRow> = rows.iter().filter(|r| &r.model == model).collect();
        let collect = |f: fn(&SplitRow) -> Option<f64>| -> Vec<f64> {
            model_rows.iter().filter_map(|r| f(r)).collect()
        };
        let clean = mean(&collect(|r| r.clean.accuracy()));
        let all_dirty = mean(&collect(|r| r.all_dirty.accuracy()));
        let input_label = mean(&collect(|r| r.input_label.accuracy()));
        averages.push(AverageRow {
            model: model.clone(),
            clean,
            all_dirty,
            input_label,
            all_dirty_direction: Direction::compare(all_dirty, clean),
            input_label_direction: Direction::compare(input_label, clean),
        });
    }

    SplitComparison {
        rows,
        averages,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallBucket {
    pub bucket_low: f64,
    pub bucket_high: f64,
    pub n: usize,
    pub correct: usize,
}

impl RecallBucket {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallBucketCurve {
    pub bucket_width: f64,
    pub min_group: usize,
    /// Buckets with at least `min_group` predicted items; the rest are
    /// omitted, which is the only reason a bucket can be missing.
    pub buckets: Vec<RecallBucket>,
    pub omitted: Vec<RecallBucket>,
}

/// Best penalized recall recorded in a verdict, across both variants. Items
/// with no crawl-present evidence sit at 0.
pub fn best_recall(verdict: &ContaminationVerdict) -> f64 {
    let label = verdict
        .label_evidence
        .as_ref()
        .map(|e| e.penalized_recall)
        .unwrap_or(0.0);
    let input = verdict
        .input_evidence
        .as_ref()
        .map(|e| e.penalized_recall)
        .unwrap_or(0.0);
    label.max(input)
}

/// Groups predicted items by best penalized recall (clean items included at
/// their sub-threshold scores) and reports per-bucket accuracy. Buckets with
/// fewer than `min_group` items are omitted.
pub fn recall_buckets(
    verdicts: &[ContaminationVerdict],
    predictions: &[PredictionRecord],
    items: &[BenchmarkItem],
    bucket_width: f64,
    min_group: usize,
) -> Result<RecallBucketCurve, AnalyticsError> {
    if !(bucket_width > 0.0 && bucket_width <= 1.0) {
        return Err(AnalyticsError::InvalidParameter(format!(
            "bucket_width {bucket_width} not in (0, 1]"
        )));
    }
    if min_group < 1 {
        return Err(AnalyticsError::InvalidParameter(
            "min_group must be >= 1".into(),
        ));
    }
    let item_by_id: HashMap<&str, &BenchmarkItem> =
        items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let verdict_by_id: HashMap<&str, &ContaminationVerdict> =
        verdicts.iter().map(|v| (v.item_id.as_str(), v)).collect();

    let bucket_count = (1.0 / bucket_width).ceil() as usize;
    let mut totals = vec![(0usize, 0usize); bucket_count];
    for pred in predictions {
        let (Some(item), Some(verdict)) = (
            item_by_id.get(pred.item_id.as_str()),
            verdict_by_id.get(pred.item_id.as_str()),
        ) else {
            continue;
        };
        if matches!(
            verdict.status,
            ContaminationStatus::Skipped | ContaminationStatus::Unknown
        ) {
            continue;
        }
        let Ok(chosen) = choose_answer(pred, item.choices.len()) else {
            continue;
        };
        let recall = best_recall(verdict);
        let idx = ((recall / bucket_width) as usize).min(bucket_count - 1);
        totals[idx].0 += 1;
        if chosen == item.answer_index {
            totals[idx].1 += 1;
        }
    }

    let mut buckets = Vec::new();
    let mut omitted = Vec::new();
    for (i, (n, correct)) in totals.into_iter().enumerate() {
        if n == 0 {
            continue;
        }
        let bucket = RecallBucket {
            bucket_low: i as f64 * bucket_width,
            bucket_high: ((i + 1) as f64 * bucket_width).min(1.0),
            n,
            correct,
        };
        if n < min_group {
            omitted.push(bucket);
        } else {
            buckets.push(bucket);
        }
    }
    Ok(RecallBucketCurve {
        bucket_width,
        min_group,
        buckets,
        omitted,
    })
}

/// Evidence URL that decided a dirty verdict.
fn decisive_url(verdict: &ContaminationVerdict) -> Option<&str> {
    match verdict.status {
        ContaminationStatus::InputAndLabel => {
            verdict.label_evidence.as_ref().map(|e| e.url.as_str())
        }
        ContaminationStatus::InputOnly => verdict.input_evidence.as_ref().map(|e| e.url.as_str()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlocklistCoverage {
    pub dirty_total: usize,
    pub exact_matches: usize,
    pub domain_matches: usize,
    pub warnings: Vec<String>,
}

impl BlocklistCoverage {
    pub fn exact_pct(&self) -> String {
        percent_two_sig(self.exact_matches, self.dirty_total)
    }

    pub fn domain_pct(&self) -> String {
        percent_two_sig(self.domain_matches, self.dirty_total)
    }
}

/// How much of the detected contamination a URL blocklist would have
/// prevented: (a) items whose decisive evidence URL matches a blocklisted
/// link exactly after canonicalization, and (b) items whose evidence
/// registrable domain matches a blocklisted domain.
pub fn blocklist_coverage<S: AsRef<str>>(
    verdicts: &[ContaminationVerdict],
    blocklist: &[S],
) -> BlocklistCoverage {
    let mut warnings = Vec::new();
    let mut exact_set: HashSet<String> = HashSet::new();
    let mut domain_set: HashSet<String> = HashSet::new();
    for (idx, line) in blocklist.iter().enumerate() {
        let line = line.as_ref().trim();
        if line.is_empty() {
            continue;
        }
        match canonical_url(line) {
            Ok(canonical) => {
                exact_set.insert(canonical);
                if let Some(domain) = registrable_domain(line) {
                    domain_set.insert(domain);
                }
            }
            Err(e) => warnings.push(format!("blocklist line {} skipped: {e}", idx + 1)),
        }
    }

    let mut coverage = BlocklistCoverage {
        warnings,
        ..BlocklistCoverage::default()
    };
    for verdict in verdicts {
        let Some(url) = decisive_url(verdict) else {
            continue;
        };
        coverage.dirty_total += 1;
        if let Ok(canonical) = canonical_url(url) {
            if exact_set.contains(&canonical) {
                coverage.exact_matches += 1;
            }
        }
        if let Some(domain) = registrable_domain(url) {
            if domain_set.contains(&domain) {
                coverage.domain_matches += 1;
            }
        }
    }
    coverage
}
