//! Contamination detection for multi-choice QA benchmarks: find benchmark
//! items whose text leaked into a web-scale training corpus, classify the
//! leak (question only vs question-and-answer), and quantify its effect on
//! model evaluation via clean/dirty split analytics.
//!
//! Pipeline shape: ingest benchmark files, verbalize items into queries,
//! discover candidate pages (search + crawl-index verification + fetch),
//! score query/page overlap with a windowed order-penalized unigram recall,
//! classify, and report.

pub mod analytics;
pub mod benchmark;
pub mod classifier;
pub mod discovery;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod text_match;
pub mod urlnorm;

pub use benchmark::{BenchmarkItem, QueryVariant, Split, VerbalizedQuery};
pub use classifier::{ContaminationStatus, ContaminationVerdict};
pub use pipeline::{run_pipeline, RunConfig, Stage};
pub use text_match::{best_window_score, meteor_align, normalize, MatchEvidence, MatchParams};
