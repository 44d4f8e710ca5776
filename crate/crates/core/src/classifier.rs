//! Per-item contamination verdicts from match evidence and crawl presence.
//!
//! An item is `input_and_label` contaminated when the question-and-answer
//! query clears the threshold on a crawl-present page, `input_only` when just
//! the question does, `clean` when nothing crawl-present clears it. Items
//! whose verbalization was skipped stay `skipped`; items with an unresolved
//! discovery stage and no positive evidence are `unknown`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::benchmark::{BenchmarkItem, QueryVariant, SkipReason, Split};
use crate::text_match::MatchEvidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationStatus {
    Clean,
    InputOnly,
    InputAndLabel,
    Skipped,
    Unknown,
}

impl ContaminationStatus {
    pub fn is_dirty(&self) -> bool {
        matches!(
            self,
            ContaminationStatus::InputOnly | ContaminationStatus::InputAndLabel
        )
    }
}

/// Best evidence retained in a verdict for one query variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEvidence {
    pub url: String,
    pub window_start: usize,
    pub window_end: usize,
    pub matched_unigrams: usize,
    pub chunks: usize,
    pub raw_recall: f64,
    pub penalized_recall: f64,
    pub crawl_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationVerdict {
    pub item_id: String,
    pub benchmark: String,
    pub split: Split,
    pub status: ContaminationStatus,
    /// Whether any search hit existed, even crawl-absent ones.
    pub online: bool,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unresolved: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_evidence: Option<VerdictEvidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_evidence: Option<VerdictEvidence>,
}

/// One scored page with its crawl presence, as produced by the match stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPage {
    pub evidence: MatchEvidence,
    pub crawl_present: bool,
    pub crawl_ids: Vec<String>,
}

/// Everything known about one item before classification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemSignals {
    pub online: bool,
    pub skip_reason: Option<SkipReason>,
    pub unresolved: Option<String>,
    pub pages: Vec<ScoredPage>,
}

fn best_for_variant(pages: &[ScoredPage], variant: QueryVariant) -> Option<VerdictEvidence> {
    let mut best: Option<(&ScoredPage, f64)> = None;
    for page in pages {
        if page.evidence.query_variant != variant || !page.crawl_present {
            continue;
        }
        let score = page.evidence.score.penalized_recall;
        if best.map(|(_, b)| score > b).unwrap_or(true) {
            best = Some((page, score));
        }
    }
    best.map(|(page, _)| VerdictEvidence {
        url: page.evidence.url.clone(),
        window_start: page.evidence.score.window_start,
        window_end: page.evidence.score.window_end,
        matched_unigrams: page.evidence.score.matched_unigrams,
        chunks: page.evidence.score.chunks,
        raw_recall: page.evidence.score.raw_recall,
        penalized_recall: page.evidence.score.penalized_recall,
        crawl_ids: page.crawl_ids.clone(),
    })
}

pub fn classify_item(
    item: &BenchmarkItem,
    signals: &ItemSignals,
    threshold: f64,
) -> ContaminationVerdict {
    let base = ContaminationVerdict {
        item_id: item.item_id.clone(),
        benchmark: item.benchmark.clone(),
        split: item.split,
        status: ContaminationStatus::Clean,
        online: signals.online,
        threshold,
        skip_reason: signals.skip_reason,
        unresolved: signals.unresolved.clone(),
        label_evidence: None,
        input_evidence: None,
    };
    if signals.skip_reason.is_some() {
        return ContaminationVerdict {
            status: ContaminationStatus::Skipped,
            ..base
        };
    }
    let label = best_for_variant(&signals.pages, QueryVariant::QuestionAndAnswer);
    let input = best_for_variant(&signals.pages, QueryVariant::QuestionOnly);
    let label_hit = label
        .as_ref()
        .map(|e| e.penalized_recall >= threshold)
        .unwrap_or(false);
    let input_hit = input
        .as_ref()
        .map(|e| e.penalized_recall >= threshold)
        .unwrap_or(false);
    let status = if label_hit {
        ContaminationStatus::InputAndLabel
    } else if input_hit {
        ContaminationStatus::InputOnly
    } else if signals.unresolved.is_some() {
        ContaminationStatus::Unknown
    } else {
        ContaminationStatus::Clean
    };
    ContaminationVerdict {
        status,
        label_evidence: label,
        input_evidence: input,
        ..base
    }
}

/// One verdict per item, in item order. Signals keyed by an item id missing
/// from `items` produce a warning instead of a verdict.
pub fn classify_benchmark(
    items: &[BenchmarkItem],
    signals_by_id: &HashMap<String, ItemSignals>,
    threshold: f64,
) -> (Vec<ContaminationVerdict>, Vec<String>) {
    let empty = ItemSignals::default();
    let verdicts = items
        .iter()
        .map(|item| {
            classify_item(
                item,
                signals_by_id.get(&item.item_id).unwrap_or(&empty),
                threshold,
            )
        })
        .collect();
    let known: std::collections::HashSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    let mut warnings: Vec<String> = signals_by_id
        .keys()
        .filter(|id| !known.contains(id.as_str()))
        .map(|id| format!("evidence references unknown item id {id:?}"))
        .collect();
    warnings.sort();
    (verdicts, warnings)
}

pub fn write_verdicts<W: Write>(
    verdicts: &[ContaminationVerdict],
    mut w: W,
) -> std::io::Result<()> {
    for v in verdicts {
        serde_json::to_writer(&mut w, v)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_verdicts(reader: impl BufRead) -> std::io::Result<Vec<ContaminationVerdict>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("verdict line {}: {e}", idx + 1),
            )
        })?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_match::WindowScore;

    fn item(id: &str) -> BenchmarkItem {
        BenchmarkItem {
            item_id: id.into(),
            benchmark: "bench".into(),
            split: Split::Test,
            question: "q".into(),
            choices: vec!["a".into(), "b".into()],
            answer_index: 0,
        }
    }

    fn page(variant: QueryVariant, url: &str, penalized: f64, present: bool) -> ScoredPage {
        ScoredPage {
            evidence: MatchEvidence::new(
                variant,
                url,
                WindowScore {
                    window_start: 0,
                    window_end: 10,
                    matched_unigrams: 9,
                    chunks: 1,
                    raw_recall: penalized.min(1.0),
                    penalty: 0.0,
                    penalized_recall: penalized,
                },
            ),
            crawl_present: present,
            crawl_ids: if present {
                vec!["2018-17".into()]
            } else {
                vec![]
            },
        }
    }

    #[test]
    fn high_label_evidence_on_present_page_is_input_and_label() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.9275,
                true,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i1"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::InputAndLabel);
        let ev = v.label_evidence.unwrap();
        assert!(ev.penalized_recall >= 0.75);
        assert_eq!(ev.crawl_ids, ["2018-17"]);
    }

    #[test]
    fn question_only_match_without_label_match_is_input_only() {
        // the professional-accounting pattern: question found, choices differ
        let signals = ItemSignals {
            online: true,
            pages: vec![
                page(
                    QueryVariant::QuestionOnly,
                    "https://x.example/q",
                    0.80,
                    true,
                ),
                page(
                    QueryVariant::QuestionAndAnswer,
                    "https://x.example/q",
                    0.30,
                    true,
                ),
            ],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i2"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::InputOnly);
        assert!(v.input_evidence.is_some());
    }

    #[test]
    fn no_evidence_at_all_is_clean_and_offline() {
        let v = classify_item(&item("i3"), &ItemSignals::default(), 0.75);
        assert_eq!(v.status, ContaminationStatus::Clean);
        assert!(!v.online);
    }

    #[test]
    fn crawl_absent_evidence_never_contaminates() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.99,
                false,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i4"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::Clean);
        assert!(v.online);
        assert!(v.label_evidence.is_none());
    }

    #[test]
    fn skip_reason_dominates() {
        let signals = ItemSignals {
            skip_reason: Some(SkipReason::LengthCap),
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i5"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::Skipped);
    }

    #[test]
    fn unresolved_without_positive_evidence_is_unknown() {
        let signals = ItemSignals {
            online: true,
            unresolved: Some("index endpoint gave up".into()),
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.2,
                true,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i6"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::Unknown);

        // positive evidence wins over an unresolved stage elsewhere
        let signals = ItemSignals {
            online: true,
            unresolved: Some("one url failed".into()),
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.9,
                true,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i6"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::InputAndLabel);
    }

    #[test]
    fn threshold_above_one_clears_everything() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                1.0,
                true,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i7"), &signals, 1.01);
        assert_eq!(v.status, ContaminationStatus::Clean);
    }

    #[test]
    fn threshold_zero_flags_any_present_overlap() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.01,
                true,
            )],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i8"), &signals, 0.000001);
        assert_eq!(v.status, ContaminationStatus::InputAndLabel);
    }

    #[test]
    fn label_precedence_over_input_when_both_clear() {
        let signals = ItemSignals {
            online: true,
            pages: vec![
                page(QueryVariant::QuestionOnly, "https://x.example/a", 0.9, true),
                page(
                    QueryVariant::QuestionAndAnswer,
                    "https://x.example/a",
                    0.8,
                    true,
                ),
            ],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i9"), &signals, 0.75);
        assert_eq!(v.status, ContaminationStatus::InputAndLabel);
    }

    #[test]
    fn best_evidence_per_variant_is_maximal() {
        let signals = ItemSignals {
            online: true,
            pages: vec![
                page(
                    QueryVariant::QuestionAndAnswer,
                    "https://x.example/low",
                    0.4,
                    true,
                ),
                page(
                    QueryVariant::QuestionAndAnswer,
                    "https://x.example/high",
                    0.6,
                    true,
                ),
            ],
            ..ItemSignals::default()
        };
        let v = classify_item(&item("i10"), &signals, 0.75);
        assert_eq!(v.label_evidence.unwrap().url, "https://x.example/high");
    }

    #[test]
    fn classify_benchmark_covers_every_item_and_warns_on_danglers() {
        let items = vec![item("a"), item("b")];
        let mut signals = HashMap::new();
        signals.insert(
            "a".to_string(),
            ItemSignals {
                online: true,
                pages: vec![page(
                    QueryVariant::QuestionAndAnswer,
                    "https://x.example/a",
                    0.9,
                    true,
                )],
                ..ItemSignals::default()
            },
        );
        signals.insert("ghost".to_string(), ItemSignals::default());
        let (verdicts, warnings) = classify_benchmark(&items, &signals, 0.75);
        assert_eq!(verdicts.len(), 2);
        assert_eq!(verdicts[0].status, ContaminationStatus::InputAndLabel);
        assert_eq!(verdicts[1].status, ContaminationStatus::Clean);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("ghost"));
    }

    #[test]
    fn raising_threshold_never_dirties_a_clean_item() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.7,
                true,
            )],
            ..ItemSignals::default()
        };
        let lo = classify_item(&item("i11"), &signals, 0.5);
        let hi = classify_item(&item("i11"), &signals, 0.75);
        assert_eq!(lo.status, ContaminationStatus::InputAndLabel);
        assert_eq!(hi.status, ContaminationStatus::Clean);
    }

    #[test]
    fn verdicts_round_trip_through_jsonl() {
        let signals = ItemSignals {
            online: true,
            pages: vec![page(
                QueryVariant::QuestionAndAnswer,
                "https://x.example/a",
                0.9275,
                true,
            )],
            ..ItemSignals::default()
        };
        let verdicts = vec![
            classify_item(&item("a"), &signals, 0.75),
            classify_item(&item("b"), &ItemSignals::default(), 0.75),
        ];
        let mut buf = Vec::new();
        write_verdicts(&verdicts, &mut buf).unwrap();
        let back = read_verdicts(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(verdicts, back);
    }
}
