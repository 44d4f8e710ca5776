//! Benchmark items, ingestion of line-delimited record files, and
//! verbalization of items into matcher queries.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on verbalized query length, in characters. Search providers
/// reject very long queries, so items above the cap are skipped rather than
/// truncated.
pub const DEFAULT_QUERY_LENGTH_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Test,
    Validation,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Split::Test),
            "validation" => Ok(Split::Validation),
            other => Err(format!(
                "unknown split {other:?} (expected test or validation)"
            )),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Test => "test",
            Split::Validation => "validation",
        })
    }
}

/// One multi-choice question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub item_id: String,
    pub benchmark: String,
    pub split: Split,
    pub question: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl BenchmarkItem {
    pub fn gold_answer(&self) -> &str {
        &self.choices[self.answer_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryVariant {
    QuestionOnly,
    QuestionAndAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Verbalized text exceeds the configured query-length cap.
    LengthCap,
    /// The search provider rejected the query as too long.
    ProviderRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedQuery {
    pub item_id: String,
    pub variant: QueryVariant,
    pub text: String,
    pub skipped: Option<SkipReason>,
}

/// Entry in the skip ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub id: String,
    pub reason: SkipReason,
}

/// Byte range of the first maximal run of two or more underscores.
fn first_blank_run(question: &str) -> Option<(usize, usize)> {
    let bytes = question.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' {
            let start = i;
            while i < bytes.len() && bytes[i] == b'_' {
                i += 1;
            }
            if i - start >= 2 {
                return Some((start, i));
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Turns an item into a flat query. For `QuestionAndAnswer` the gold answer
/// replaces the first blank run (two or more underscores) when one exists,
/// otherwise it is appended after the question separated by a single space.
/// `QuestionOnly` returns the question unmodified. Other choices never appear
/// in the query. Texts longer than `length_cap` characters are marked skipped.
pub fn verbalize(
    item: &BenchmarkItem,
    variant: QueryVariant,
    length_cap: usize,
) -> VerbalizedQuery {
    let text = match variant {
        QueryVariant::QuestionOnly => item.question.clone(),
        QueryVariant::QuestionAndAnswer => match first_blank_run(&item.question) {
            Some((start, end)) => {
                let mut text =
                    String::with_capacity(item.question.len() + item.gold_answer().len());
                text.push_str(&item.question[..start]);
                text.push_str(item.gold_answer());
                text.push_str(&item.question[end..]);
                text
            }
            None => format!("{} {}", item.question, item.gold_answer()),
        },
    };
    let skipped = (text.chars().count() > length_cap).then_some(SkipReason::LengthCap);
    VerbalizedQuery {
        item_id: item.item_id.clone(),
        variant,
        text,
        skipped,
    }
}

/// Line-delimited input schema: `{id, question, choices: array, answer: integer}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    #[default]
    Canonical,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    question: String,
    choices: Vec<String>,
    answer: i64,
}

/// A record that failed structural validation. Reported, never silently
/// dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub items: Vec<BenchmarkItem>,
    pub record_errors: Vec<RecordError>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read benchmark file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Reads a benchmark file, returning all valid items plus per-record errors.
pub fn ingest_benchmark(
    path: &Path,
    benchmark: &str,
    split: Split,
    format: RecordFormat,
) -> Result<IngestOutcome, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let RecordFormat::Canonical = format;
    parse_benchmark_records(BufReader::new(file), benchmark, split).map_err(|source| {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

pub fn parse_benchmark_records(
    reader: impl BufRead,
    benchmark: &str,
    split: Split,
) -> std::io::Result<IngestOutcome> {
    let mut outcome = IngestOutcome::default();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CanonicalRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                outcome.record_errors.push(RecordError {
                    line: line_no,
                    id: None,
                    reason: format!("unparseable record: {e}"),
                });
                continue;
            }
        };
        match validate_record(record, benchmark, split, &mut seen_ids) {
            Ok(item) => outcome.items.push(item),
            Err((id, reason)) => outcome.record_errors.push(RecordError {
                line: line_no,
                id,
                reason,
            }),
        }
    }
    Ok(outcome)
}

fn validate_record(
    record: CanonicalRecord,
    benchmark: &str,
    split: Split,
    seen_ids: &mut HashSet<String>,
) -> Result<BenchmarkItem, (Option<String>, String)> {
    let id = record.id;
    let fail = |reason: String| Err((Some(id.clone()), reason));
    if id.trim().is_empty() {
        return Err((None, "empty id".to_string()));
    }
    if record.question.trim().is_empty() {
        return fail("empty question".to_string());
    }
    let n = record.choices.len();
    if !(2..=5).contains(&n) {
        return fail(format!("expected 2-5 choices, got {n}"));
    }
    if record.answer < 0 || record.answer as usize >= n {
        return fail(format!(
            "answer index {} out of range for {n} choices",
            record.answer
        ));
    }
    if !seen_ids.insert(id.clone()) {
        return fail(format!("duplicate item id {id:?}"));
    }
    Ok(BenchmarkItem {
        item_id: id,
        benchmark: benchmark.to_string(),
        split,
        question: record.question,
        choices: record.choices,
        answer_index: record.answer as usize,
    })
}

/// Writes items back out in the canonical record format. Re-ingesting the
/// output yields an equal item list.
pub fn write_benchmark_items<W: Write>(items: &[BenchmarkItem], mut w: W) -> std::io::Result<()> {
    for item in items {
        let record = CanonicalRecord {
            id: item.item_id.clone(),
            question: item.question.clone(),
            choices: item.choices.clone(),
            answer: item.answer_index as i64,
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
