//! Stage orchestration: ingest -> discover -> match -> classify -> report,
//! plus crawl-range rescans. Stages communicate only via files in the output
//! directory, so any stage can be deleted and reproduced from its upstream
//! artifacts, and reruns with warm caches are no-ops.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    blocklist_coverage, contamination_stats, read_predictions, recall_buckets, split_accuracy,
    PredictionRecord,
};
use crate::benchmark::{
    ingest_benchmark, verbalize, BenchmarkItem, QueryVariant, RecordFormat, SkipEntry, SkipReason,
    Split, VerbalizedQuery, DEFAULT_QUERY_LENGTH_CAP,
};
use crate::classifier::{classify_benchmark, ContaminationVerdict, ItemSignals, ScoredPage};
use crate::discovery::cache::{write_atomic, DiskCache};
use crate::discovery::cdx::{CrawlRange, IndexError};
use crate::discovery::fetch::{FetchError, PageText, DEFAULT_FETCH_MAX_BYTES};
use crate::discovery::provider::{ProviderError, SearchHit};
use crate::discovery::ratelimit::{Clock, ManualClock, RateLimiter, SystemClock};
use crate::discovery::{
    fixture_backends, load_fixture_corpus, DiscoveryConfig, DiscoveryEngine, FixtureBackends,
};
use crate::report;
use crate::text_match::{best_window_score, normalize, MatchEvidence, MatchParams, WindowScore};

pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MIN_GROUP: usize = 50;
pub const DEFAULT_BUCKET_WIDTH: f64 = 0.1;
pub const DEFAULT_RATE_LIMIT_PER_SEC: f64 = 3.0;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_CRAWL_RANGE: &str = "2017-01..2020-52";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSource {
    pub name: String,
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Offline fixture corpus backing search, crawl index, and fetcher.
    Mock,
    /// Live HTTP search API, crawl index, and fetcher.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub benchmarks: Vec<BenchmarkSource>,
    pub provider: ProviderKind,
    /// Fixture corpus path; required for the mock provider.
    pub corpus: Option<PathBuf>,
    pub search_endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub cdx_endpoint: Option<String>,
    pub crawl_range: String,
    pub threshold: f64,
    pub gamma: f64,
    pub beta: f64,
    pub window_factor: usize,
    pub stride: Option<usize>,
    pub beam_width: usize,
    pub top_k: usize,
    pub min_group: usize,
    pub bucket_width: f64,
    pub query_length_cap: usize,
    pub rate_limit_per_sec: f64,
    pub max_retries: u32,
    pub fetch_max_bytes: usize,
    pub primary_language: String,
    pub allow_crawl_absent_fetch: bool,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub predictions: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmarks: Vec::new(),
            provider: ProviderKind::Mock,
            corpus: None,
            search_endpoint: None,
            api_key_env: None,
            cdx_endpoint: None,
            crawl_range: DEFAULT_CRAWL_RANGE.to_string(),
            threshold: DEFAULT_THRESHOLD,
            gamma: crate::text_match::DEFAULT_GAMMA,
            beta: crate::text_match::DEFAULT_BETA,
            window_factor: crate::text_match::DEFAULT_WINDOW_FACTOR,
            stride: None,
            beam_width: crate::text_match::DEFAULT_BEAM_WIDTH,
            top_k: DEFAULT_TOP_K,
            min_group: DEFAULT_MIN_GROUP,
            bucket_width: DEFAULT_BUCKET_WIDTH,
            query_length_cap: DEFAULT_QUERY_LENGTH_CAP,
            rate_limit_per_sec: DEFAULT_RATE_LIMIT_PER_SEC,
            max_retries: DEFAULT_MAX_RETRIES,
            fetch_max_bytes: DEFAULT_FETCH_MAX_BYTES,
            primary_language: "eng".to_string(),
            allow_crawl_absent_fetch: false,
            cache_dir: PathBuf::from("cache"),
            output_dir: PathBuf::from("out"),
            predictions: None,
            blocklist: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if self.benchmarks.is_empty() {
            return fail("at least one benchmark is required".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return fail(format!("threshold {} not in (0, 1]", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if self.beta <= 0.0 {
            return fail(format!("beta {} must be positive", self.beta));
        }
        if self.window_factor < 1 {
            return fail("window_factor must be >= 1".into());
        }
        if self.stride == Some(0) {
            return fail("stride must be >= 1".into());
        }
        if self.top_k < 1 {
            return fail("top_k must be >= 1".into());
        }
        if self.min_group < 1 {
            return fail("min_group must be >= 1".into());
        }
        if !(self.bucket_width > 0.0 && self.bucket_width <= 1.0) {
            return fail(format!("bucket_width {} not in (0, 1]", self.bucket_width));
        }
        self.crawl_range
            .parse::<CrawlRange>()
            .map_err(PipelineError::Config)?;
        match self.provider {
            ProviderKind::Mock => {
                if self.corpus.is_none() {
                    return fail("the mock provider needs --corpus".into());
                }
            }
            ProviderKind::Live => {
                if self.search_endpoint.is_none() || self.api_key_env.is_none() {
                    return fail(
                        "the live provider needs --search-endpoint and --api-key-env".into(),
                    );
                }
                if self.cdx_endpoint.is_none() {
                    return fail("the live provider needs --cdx-endpoint".into());
                }
            }
        }
        Ok(())
    }

    pub fn crawl_range(&self) -> CrawlRange {
        self.crawl_range.parse().expect("validated crawl range")
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            gamma: self.gamma,
            beta: self.beta,
            window_factor: self.window_factor,
            stride: self.stride,
            beam_width: self.beam_width,
        }
    }

    fn discovery_config(&self, range: CrawlRange) -> DiscoveryConfig {
        DiscoveryConfig {
            top_k: self.top_k,
            crawl_range: range,
            primary_language: self.primary_language.clone(),
            max_retries: self.max_retries,
            backoff_base: Duration::from_millis(250),
            fetch_max_bytes: self.fetch_max_bytes,
            allow_crawl_absent_fetch: self.allow_crawl_absent_fetch,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} requires {artifact}; run the earlier stages first")]
    MissingUpstream { stage: Stage, artifact: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("search provider failed: {0}")]
    Provider(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Discover,
    Match,
    Classify,
    Report,
    /// Not part of the ordinary stage sequence; runs via [`rescan`].
    Rescan,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Discover,
        Stage::Match,
        Stage::Classify,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Discover => "discover",
            Stage::Match => "match",
            Stage::Classify => "classify",
            Stage::Report => "report",
            Stage::Rescan => "rescan",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ingest" => Ok(Stage::Ingest),
            "discover" => Ok(Stage::Discover),
            "match" => Ok(Stage::Match),
            "classify" => Ok(Stage::Classify),
            "report" => Ok(Stage::Report),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Completed,
    /// All artifacts already present; nothing recomputed.
    UpToDate,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub stages: Vec<(Stage, StageStatus)>,
    /// True when any item ended unresolved, unknown, or structurally invalid.
    pub partial: bool,
}

/// Per-item search result with crawl presence and fetch outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub url: String,
    pub rank: usize,
    pub crawl_present: bool,
    pub crawl_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetch_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub item_id: String,
    pub online: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unresolved: Option<String>,
    pub hits: Vec<HitRecord>,
}

/// One scored (item, variant, page) triple; the match-stage contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub item_id: String,
    pub variant: QueryVariant,
    pub url: String,
    pub crawl_present: bool,
    pub crawl_ids: Vec<String>,
    #[serde(flatten)]
    pub score: WindowScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub item_id: String,
    pub stage: String,
    pub outcome: String,
    pub reason: String,
}

pub mod artifact {
    pub const CONFIG: &str = "config.json";
    pub const ITEMS: &str = "items.jsonl";
    pub const INGEST_ERRORS: &str = "ingest_errors.jsonl";
    pub const QUERIES: &str = "queries.jsonl";
    pub const SKIP_LEDGER: &str = "skip_ledger.jsonl";
    pub const DISCOVERY: &str = "discovery.jsonl";
    pub const PAGES: &str = "pages.jsonl";
    pub const LEDGER_DISCOVER: &str = "ledger_discover.jsonl";
    pub const EVIDENCE: &str = "evidence.jsonl";
    pub const VERDICTS: &str = "verdicts.jsonl";
    pub const LEDGER_CLASSIFY: &str = "ledger_classify.jsonl";
    pub const REPORT_TSV: &str = "report.tsv";
    pub const REPORT_TXT: &str = "report.txt";
    pub const SPLITS_TSV: &str = "splits.tsv";
    pub const SPLITS_TXT: &str = "splits.txt";
    pub const BUCKETS_TSV: &str = "buckets.tsv";
    pub const BLOCKLIST_TSV: &str = "blocklist.tsv";
    pub const RESCAN_TSV: &str = "rescan.tsv";
    pub const RESCAN_TXT: &str = "rescan.txt";
}

/// Builds the discovery engine described by the config.
pub fn build_engine(config: &RunConfig) -> Result<DiscoveryEngine, PipelineError> {
    build_engine_for_range(config, config.crawl_range())
}

fn build_engine_for_range(
    config: &RunConfig,
    range: CrawlRange,
) -> Result<DiscoveryEngine, PipelineError> {
    let cache = DiskCache::new(&config.cache_dir)
        .map_err(|e| PipelineError::Config(format!("cache dir: {e}")))?;
    match config.provider {
        ProviderKind::Mock => {
            let corpus_path = config
                .corpus
                .as_ref()
                .ok_or_else(|| PipelineError::Config("mock provider needs a corpus".into()))?;
            let docs = load_fixture_corpus(corpus_path).map_err(io_err(corpus_path))?;
            let FixtureBackends {
                provider,
                index,
                fetcher,
            } = fixture_backends(&docs, config.query_length_cap);
            // Offline backends never sleep for real.
            let clock: Arc<dyn Clock> = Arc::new(ManualClock::new());
            Ok(DiscoveryEngine::new(
                provider,
                index,
                fetcher,
                clock,
                cache,
                config.discovery_config(range),
            ))
        }
        ProviderKind::Live => {
            let clock: Arc<dyn Clock> = Arc::new(SystemClock);
            let limiter = Arc::new(RateLimiter::new(config.rate_limit_per_sec, clock.clone()));
            let provider = Arc::new(crate::discovery::provider::HttpSearchProvider::new(
                config
                    .search_endpoint
                    .clone()
                    .ok_or_else(|| PipelineError::Config("missing search endpoint".into()))?,
                config
                    .api_key_env
                    .clone()
                    .ok_or_else(|| PipelineError::Config("missing api key env".into()))?,
                config.query_length_cap,
                limiter.clone(),
            ));
            let index = Arc::new(crate::discovery::cdx::HttpCdxClient::new(
                config
                    .cdx_endpoint
                    .clone()
                    .ok_or_else(|| PipelineError::Config("missing cdx endpoint".into()))?,
                limiter.clone(),
            ));
            let fetcher = Arc::new(crate::discovery::fetch::HttpFetcher::new(
                limiter,
                clock.clone(),
                config.fetch_max_bytes,
            ));
            Ok(DiscoveryEngine::new(
                provider,
                index,
                fetcher,
                clock,
                cache,
                config.discovery_config(range),
            ))
        }
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", idx + 1),
            ),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("jsonl rows serialize"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(io_err(path))
}

fn require_artifact(dir: &Path, stage: Stage, name: &str) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(PipelineError::MissingUpstream {
            stage,
            artifact: name.to_string(),
        });
    }
    Ok(path)
}

fn artifacts_exist(dir: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| dir.join(n).exists())
}

/// Runs the requested stages in pipeline order. Already-complete stages are
/// skipped; missing upstream artifacts abort with an actionable error.
pub fn run_pipeline(
    config: &RunConfig,
    engine: &DiscoveryEngine,
    stages: &[Stage],
) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let config_json = serde_json::to_vec_pretty(config).expect("config serializes");
    write_atomic(&config.output_dir.join(artifact::CONFIG), &config_json)
        .map_err(io_err(&config.output_dir))?;

    let mut summary = RunSummary::default();
    let mut ordered: Vec<Stage> = Vec::new();
    for stage in Stage::ALL {
        if stages.contains(&stage) {
            ordered.push(stage);
        }
    }
    for stage in ordered {
        let (status, partial) = match stage {
            Stage::Ingest => stage_ingest(config)?,
            Stage::Discover => stage_discover(config, engine)?,
            Stage::Match => stage_match(config)?,
            Stage::Classify => stage_classify(config)?,
            Stage::Report => stage_report(config)?,
            Stage::Rescan => {
                return Err(PipelineError::Config(
                    "rescan is not a pipeline stage; call rescan()".into(),
                ))
            }
        };
        summary.partial |= partial;
        summary.stages.push((stage, status));
    }
    Ok(summary)
}

fn stage_ingest(config: &RunConfig) -> Result<(StageStatus, bool), PipelineError> {
    let dir = &config.output_dir;
    let outputs = [
        artifact::ITEMS,
        artifact::INGEST_ERRORS,
        artifact::QUERIES,
        artifact::SKIP_LEDGER,
    ];
    if artifacts_exist(dir, &outputs) {
        return Ok((StageStatus::UpToDate, false));
    }

    let mut items: Vec<BenchmarkItem> = Vec::new();
    let mut errors: Vec<serde_json::Value> = Vec::new();
    let mut seen_ids: HashMap<String, String> = HashMap::new();
    for source in &config.benchmarks {
        let outcome = ingest_benchmark(
            &source.path,
            &source.name,
            source.split,
            RecordFormat::Canonical,
        )
        .map_err(|e| PipelineError::Config(e.to_string()))?;
        for err in outcome.record_errors {
            errors.push(serde_json::json!({
                "benchmark": source.name,
                "line": err.line,
                "id": err.id,
                "reason": err.reason,
            }));
        }
        for item in outcome.items {
            if let Some(other) = seen_ids.get(&item.item_id) {
                errors.push(serde_json::json!({
                    "benchmark": source.name,
                    "line": null,
                    "id": item.item_id,
                    "reason": format!("item id collides with benchmark {other:?}; dropped"),
                }));
                continue;
            }
            seen_ids.insert(item.item_id.clone(), source.name.clone());
            items.push(item);
        }
    }

    let mut queries: Vec<VerbalizedQuery> = Vec::new();
    let mut skips: Vec<SkipEntry> = Vec::new();
    for item in &items {
        let qa = verbalize(
            item,
            QueryVariant::QuestionAndAnswer,
            config.query_length_cap,
        );
        let qo = verbalize(item, QueryVariant::QuestionOnly, config.query_length_cap);
        if let Some(reason) = qa.skipped {
            skips.push(SkipEntry {
                id: item.item_id.clone(),
                reason,
            });
        }
        queries.push(qa);
        queries.push(qo);
    }

    let partial = !errors.is_empty();
    write_jsonl(&dir.join(artifact::ITEMS), &items)?;
    write_jsonl(&dir.join(artifact::INGEST_ERRORS), &errors)?;
    write_jsonl(&dir.join(artifact::QUERIES), &queries)?;
    write_jsonl(&dir.join(artifact::SKIP_LEDGER), &skips)?;
    Ok((StageStatus::Completed, partial))
}

struct ItemQueries {
    qa: Option<VerbalizedQuery>,
    qo: Option<VerbalizedQuery>,
}

fn load_queries(path: &Path) -> Result<(Vec<String>, HashMap<String, ItemQueries>), PipelineError> {
    let rows: Vec<VerbalizedQuery> = read_jsonl(path)?;
    let mut order = Vec::new();
    let mut by_item: HashMap<String, ItemQueries> = HashMap::new();
    for q in rows {
        let entry = by_item.entry(q.item_id.clone()).or_insert_with(|| {
            order.push(q.item_id.clone());
            ItemQueries { qa: None, qo: None }
        });
        match q.variant {
            QueryVariant::QuestionAndAnswer => entry.qa = Some(q),
            QueryVariant::QuestionOnly => entry.qo = Some(q),
        }
    }
    Ok((order, by_item))
}

fn stage_discover(
    config: &RunConfig,
    engine: &DiscoveryEngine,
) -> Result<(StageStatus, bool), PipelineError> {
    let dir = &config.output_dir;
    let outputs = [
        artifact::DISCOVERY,
        artifact::PAGES,
        artifact::LEDGER_DISCOVER,
    ];
    if artifacts_exist(dir, &outputs) {
        return Ok((StageStatus::UpToDate, false));
    }
    let queries_path = require_artifact(dir, Stage::Discover, artifact::QUERIES)?;
    let (order, by_item) = load_queries(&queries_path)?;

    let mut records: Vec<DiscoveryRecord> = Vec::new();
    let mut pages: BTreeMap<String, PageText> = BTreeMap::new();
    let mut ledger: Vec<LedgerEntry> = Vec::new();
    let mut partial = false;

    for item_id in &order {
        let queries = &by_item[item_id];
        let Some(qa) = &queries.qa else { continue };
        if let Some(reason) = qa.skipped {
            records.push(DiscoveryRecord {
                item_id: item_id.clone(),
                online: false,
                skipped: Some(reason),
                unresolved: None,
                hits: Vec::new(),
            });
            ledger.push(LedgerEntry {
                item_id: item_id.clone(),
                stage: "discover".into(),
                outcome: "skip".into(),
                reason: "query over length cap".into(),
            });
            continue;
        }

        let provider_hits = match engine.search_cached(&qa.text) {
            Ok(hits) => hits,
            Err(ProviderError::QueryTooLong(n)) => {
                records.push(DiscoveryRecord {
                    item_id: item_id.clone(),
                    online: false,
                    skipped: Some(SkipReason::ProviderRejected),
                    unresolved: None,
                    hits: Vec::new(),
                });
                ledger.push(LedgerEntry {
                    item_id: item_id.clone(),
                    stage: "discover".into(),
                    outcome: "skip".into(),
                    reason: format!("provider rejected {n}-char query"),
                });
                continue;
            }
            Err(ProviderError::Retryable(reason)) => {
                partial = true;
                records.push(DiscoveryRecord {
                    item_id: item_id.clone(),
                    online: false,
                    skipped: None,
                    unresolved: Some(format!("search failed after retries: {reason}")),
                    hits: Vec::new(),
                });
                ledger.push(LedgerEntry {
                    item_id: item_id.clone(),
                    stage: "discover".into(),
                    outcome: "unresolved".into(),
                    reason,
                });
                continue;
            }
            Err(ProviderError::Fatal(reason)) => return Err(PipelineError::Provider(reason)),
        };

        let hits: Vec<SearchHit> = provider_hits
            .into_iter()
            .enumerate()
            .map(|(idx, hit)| SearchHit {
                query_id: item_id.clone(),
                url: hit.url,
                rank: idx + 1,
                snippet: hit.snippet,
            })
            .collect();
        let mut record = DiscoveryRecord {
            item_id: item_id.clone(),
            online: !hits.is_empty(),
            skipped: None,
            unresolved: None,
            hits: Vec::new(),
        };
        for hit in &hits {
            let mut hit_record = HitRecord {
                url: hit.url.clone(),
                rank: hit.rank,
                crawl_present: false,
                crawl_ids: Vec::new(),
                language: None,
                content_hash: None,
                fetch_error: None,
            };
            match engine.presence_cached(&hit.url) {
                Ok(presence) => {
                    hit_record.crawl_present = presence.present;
                    hit_record.crawl_ids = presence.crawl_ids;
                    hit_record.language = presence.language_tag;
                }
                Err(IndexError::Unavailable(reason)) => {
                    partial = true;
                    record.unresolved = Some(format!(
                        "crawl presence unresolved for {}: {reason}",
                        hit.url
                    ));
                    ledger.push(LedgerEntry {
                        item_id: item_id.clone(),
                        stage: "discover".into(),
                        outcome: "unresolved".into(),
                        reason: format!("{}: {reason}", hit.url),
                    });
                    record.hits.push(hit_record);
                    continue;
                }
                Err(IndexError::Fatal(reason)) => {
                    partial = true;
                    record.unresolved =
                        Some(format!("crawl lookup failed for {}: {reason}", hit.url));
                    ledger.push(LedgerEntry {
                        item_id: item_id.clone(),
                        stage: "discover".into(),
                        outcome: "unresolved".into(),
                        reason: format!("{}: {reason}", hit.url),
                    });
                    record.hits.push(hit_record);
                    continue;
                }
            }
            if hit_record.crawl_present || config.allow_crawl_absent_fetch {
                match engine.page_cached(&hit.url, hit_record.crawl_present) {
                    Ok(page) => {
                        hit_record.content_hash = Some(page.content_hash.clone());
                        pages.entry(page.url.clone()).or_insert(page);
                    }
                    Err(e) => {
                        let unresolved = match &e {
                            FetchError::Network { .. } | FetchError::Oversized { .. } => true,
                            FetchError::NonText { .. } | FetchError::Fatal { .. } => false,
                        };
                        if unresolved {
                            partial = true;
                            record.unresolved = Some(e.to_string());
                        }
                        hit_record.fetch_error = Some(e.to_string());
                        ledger.push(LedgerEntry {
                            item_id: item_id.clone(),
                            stage: "discover".into(),
                            outcome: if unresolved {
                                "unresolved"
                            } else {
                                "fetch_error"
                            }
                            .into(),
                            reason: e.to_string(),
                        });
                    }
                }
            }
            record.hits.push(hit_record);
        }
        ledger.push(LedgerEntry {
            item_id: item_id.clone(),
            stage: "discover".into(),
            outcome: "ok".into(),
            reason: format!("{} hits", record.hits.len()),
        });
        records.push(record);
    }

    let page_rows: Vec<&PageText> = pages.values().collect();
    write_jsonl(&dir.join(artifact::DISCOVERY), &records)?;
    write_jsonl(&dir.join(artifact::PAGES), &page_rows)?;
    write_jsonl(&dir.join(artifact::LEDGER_DISCOVER), &ledger)?;
    Ok((StageStatus::Completed, partial))
}

fn stage_match(config: &RunConfig) -> Result<(StageStatus, bool), PipelineError> {
    let dir = &config.output_dir;
    if artifacts_exist(dir, &[artifact::EVIDENCE]) {
        return Ok((StageStatus::UpToDate, false));
    }
    let queries_path = require_artifact(dir, Stage::Match, artifact::QUERIES)?;
    let discovery_path = require_artifact(dir, Stage::Match, artifact::DISCOVERY)?;
    let pages_path = require_artifact(dir, Stage::Match, artifact::PAGES)?;

    let (_, by_item) = load_queries(&queries_path)?;
    let records: Vec<DiscoveryRecord> = read_jsonl(&discovery_path)?;
    let pages: Vec<PageText> = read_jsonl(&pages_path)?;
    let tokens_by_url: HashMap<&str, crate::text_match::TokenSequence> = pages
        .iter()
        .map(|p| (p.url.as_str(), normalize(&p.extracted_text)))
        .collect();

    let params = config.match_params();
    let mut evidence: Vec<EvidenceRecord> = Vec::new();
    for record in &records {
        if record.skipped.is_some() {
            continue;
        }
        let Some(queries) = by_item.get(&record.item_id) else {
            continue;
        };
        let variants: Vec<(QueryVariant, crate::text_match::TokenSequence)> =
            [queries.qa.as_ref(), queries.qo.as_ref()]
                .into_iter()
                .flatten()
                .map(|q| (q.variant, normalize(&q.text)))
                .collect();
        for hit in dedup_hits_by_content(&record.hits) {
            let Some(page_tokens) = tokens_by_url.get(hit.url.as_str()) else {
                continue;
            };
            for (variant, query_tokens) in &variants {
                let score = best_window_score(query_tokens, page_tokens, &params);
                evidence.push(EvidenceRecord {
                    item_id: record.item_id.clone(),
                    variant: *variant,
                    url: hit.url.clone(),
                    crawl_present: hit.crawl_present,
                    crawl_ids: hit.crawl_ids.clone(),
                    score,
                });
            }
        }
    }
    write_jsonl(&dir.join(artifact::EVIDENCE), &evidence)?;
    Ok((StageStatus::Completed, false))
}

/// Mirrors of the same content share a hash; keep only the best-ranked copy.
fn dedup_hits_by_content(hits: &[HitRecord]) -> Vec<&HitRecord> {
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut out = Vec::new();
    for hit in hits {
        match &hit.content_hash {
            Some(hash) => {
                if seen.insert(hash.as_str()) {
                    out.push(hit);
                }
            }
            None => out.push(hit),
        }
    }
    out
}

fn stage_classify(config: &RunConfig) -> Result<(StageStatus, bool), PipelineError> {
    let dir = &config.output_dir;
    let outputs = [artifact::VERDICTS, artifact::LEDGER_CLASSIFY];
    if artifacts_exist(dir, &outputs) {
        return Ok((StageStatus::UpToDate, false));
    }
    let items_path = require_artifact(dir, Stage::Classify, artifact::ITEMS)?;
    let skip_path = require_artifact(dir, Stage::Classify, artifact::SKIP_LEDGER)?;
    let discovery_path = require_artifact(dir, Stage::Classify, artifact::DISCOVERY)?;
    let evidence_path = require_artifact(dir, Stage::Classify, artifact::EVIDENCE)?;

    let items: Vec<BenchmarkItem> = read_jsonl(&items_path)?;
    let skips: Vec<SkipEntry> = read_jsonl(&skip_path)?;
    let records: Vec<DiscoveryRecord> = read_jsonl(&discovery_path)?;
    let evidence: Vec<EvidenceRecord> = read_jsonl(&evidence_path)?;

    let mut signals: HashMap<String, ItemSignals> = HashMap::new();
    for skip in &skips {
        signals.entry(skip.id.clone()).or_default().skip_reason = Some(skip.reason);
    }
    for record in &records {
        let entry = signals.entry(record.item_id.clone()).or_default();
        entry.online = record.online;
        if entry.skip_reason.is_none() {
            entry.skip_reason = record.skipped;
        }
        entry.unresolved = record.unresolved.clone();
    }
    for row in evidence {
        let page = ScoredPage {
            evidence: MatchEvidence::new(row.variant, row.url, row.score),
            crawl_present: row.crawl_present,
            crawl_ids: row.crawl_ids,
        };
        signals.entry(row.item_id).or_default().pages.push(page);
    }

    let (verdicts, warnings) = classify_benchmark(&items, &signals, config.threshold);
    let partial = verdicts
        .iter()
        .any(|v| v.status == crate::classifier::ContaminationStatus::Unknown);
    let ledger: Vec<LedgerEntry> = warnings
        .iter()
        .map(|w| LedgerEntry {
            item_id: String::new(),
            stage: "classify".into(),
            outcome: "warning".into(),
            reason: w.clone(),
        })
        .collect();
    write_jsonl(&dir.join(artifact::VERDICTS), &verdicts)?;
    write_jsonl(&dir.join(artifact::LEDGER_CLASSIFY), &ledger)?;
    Ok((StageStatus::Completed, partial))
}

fn stage_report(config: &RunConfig) -> Result<(StageStatus, bool), PipelineError> {
    let dir = &config.output_dir;
    let mut expected = vec![artifact::REPORT_TSV, artifact::REPORT_TXT];
    if config.predictions.is_some() {
        expected.extend([
            artifact::SPLITS_TSV,
            artifact::SPLITS_TXT,
            artifact::BUCKETS_TSV,
        ]);
    }
    if config.blocklist.is_some() {
        expected.push(artifact::BLOCKLIST_TSV);
    }
    if artifacts_exist(dir, &expected) {
        return Ok((StageStatus::UpToDate, false));
    }
    let verdicts_path = require_artifact(dir, Stage::Report, artifact::VERDICTS)?;
    let verdicts: Vec<ContaminationVerdict> = read_jsonl(&verdicts_path)?;

    let report = contamination_stats(&verdicts);
    write_text(
        &dir.join(artifact::REPORT_TSV),
        &report::contamination_tsv(&report),
    )?;
    write_text(
        &dir.join(artifact::REPORT_TXT),
        &report::contamination_table(&report),
    )?;

    if let Some(pred_path) = &config.predictions {
        let items_path = require_artifact(dir, Stage::Report, artifact::ITEMS)?;
        let items: Vec<BenchmarkItem> = read_jsonl(&items_path)?;
        let file = File::open(pred_path).map_err(io_err(pred_path))?;
        let predictions = read_predictions(BufReader::new(file)).map_err(io_err(pred_path))?;

        let comparison = split_accuracy(&verdicts, &predictions, &items);
        write_text(
            &dir.join(artifact::SPLITS_TSV),
            &report::splits_tsv(&comparison),
        )?;
        write_text(
            &dir.join(artifact::SPLITS_TXT),
            &report::splits_table(&comparison),
        )?;

        let mut model_order: Vec<&str> = Vec::new();
        for p in &predictions {
            if !model_order.contains(&p.model.as_str()) {
                model_order.push(&p.model);
            }
        }
        let mut curves = Vec::new();
        for model in model_order {
            let model_preds: Vec<PredictionRecord> = predictions
                .iter()
                .filter(|p| p.model == model)
                .cloned()
                .collect();
            let curve = recall_buckets(
                &verdicts,
                &model_preds,
                &items,
                config.bucket_width,
                config.min_group,
            )
            .map_err(|e| PipelineError::Config(e.to_string()))?;
            curves.push((model.to_string(), curve));
        }
        write_text(
            &dir.join(artifact::BUCKETS_TSV),
            &report::buckets_tsv(&curves),
        )?;
    }

    if let Some(blocklist_path) = &config.blocklist {
        let content = std::fs::read_to_string(blocklist_path).map_err(io_err(blocklist_path))?;
        let lines: Vec<&str> = content.lines().collect();
        let coverage = blocklist_coverage(&verdicts, &lines);
        write_text(
            &dir.join(artifact::BLOCKLIST_TSV),
            &report::blocklist_tsv(&coverage),
        )?;
    }
    Ok((StageStatus::Completed, false))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

/// Side-by-side contamination rates for the baseline range (from the stored
/// verdicts) and an alternate crawl range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescanRow {
    pub benchmark: String,
    pub total: usize,
    pub baseline_dirty: usize,
    pub alternate_dirty: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RescanReport {
    pub baseline_range: String,
    pub alternate_range: String,
    pub rows: Vec<RescanRow>,
}

impl RescanReport {
    pub fn overall(&self) -> RescanRow {
        let mut row = RescanRow {
            benchmark: "overall".into(),
            total: 0,
            baseline_dirty: 0,
            alternate_dirty: 0,
        };
        for r in &self.rows {
            row.total += r.total;
            row.baseline_dirty += r.baseline_dirty;
            row.alternate_dirty += r.alternate_dirty;
        }
        row
    }
}

/// Re-evaluates crawl presence under `alternate_range` for every discovered
/// URL — no new searches — scores any newly present pages, re-classifies, and
/// writes a baseline-vs-alternate rate comparison.
pub fn rescan(config: &RunConfig, alternate_range: &str) -> Result<RescanReport, PipelineError> {
    config.validate()?;
    let alt_range: CrawlRange = alternate_range.parse().map_err(PipelineError::Config)?;
    let dir = &config.output_dir;
    let items_path = require_artifact(dir, Stage::Rescan, artifact::ITEMS)?;
    let queries_path = require_artifact(dir, Stage::Rescan, artifact::QUERIES)?;
    let discovery_path = require_artifact(dir, Stage::Rescan, artifact::DISCOVERY)?;
    let evidence_path = require_artifact(dir, Stage::Rescan, artifact::EVIDENCE)?;
    let verdicts_path = require_artifact(dir, Stage::Rescan, artifact::VERDICTS)?;
    let pages_path = require_artifact(dir, Stage::Rescan, artifact::PAGES)?;

    let items: Vec<BenchmarkItem> = read_jsonl(&items_path)?;
    let (_, queries) = load_queries(&queries_path)?;
    let records: Vec<DiscoveryRecord> = read_jsonl(&discovery_path)?;
    let evidence: Vec<EvidenceRecord> = read_jsonl(&evidence_path)?;
    let baseline: Vec<ContaminationVerdict> = read_jsonl(&verdicts_path)?;
    let pages: Vec<PageText> = read_jsonl(&pages_path)?;

    let engine = build_engine_for_range(config, alt_range)?;
    let params = config.match_params();
    let mut page_tokens: HashMap<String, crate::text_match::TokenSequence> = pages
        .iter()
        .map(|p| (p.url.clone(), normalize(&p.extracted_text)))
        .collect();

    // (item, variant, url) -> evidence score under the baseline run
    let mut scored: HashMap<(String, QueryVariant, String), WindowScore> = HashMap::new();
    for row in &evidence {
        scored.insert(
            (row.item_id.clone(), row.variant, row.url.clone()),
            row.score,
        );
    }

    let mut signals: HashMap<String, ItemSignals> = HashMap::new();
    for record in &records {
        let entry = signals.entry(record.item_id.clone()).or_default();
        entry.online = record.online;
        entry.skip_reason = record.skipped;
        entry.unresolved = record.unresolved.clone();
        let Some(item_queries) = queries.get(&record.item_id) else {
            continue;
        };
        for hit in &record.hits {
            let presence = match engine.presence_cached(&hit.url) {
                Ok(p) => p,
                Err(IndexError::Unavailable(reason)) | Err(IndexError::Fatal(reason)) => {
                    entry.unresolved = Some(format!("rescan presence failed: {reason}"));
                    continue;
                }
            };
            if !presence.present {
                continue;
            }
            for query in [item_queries.qa.as_ref(), item_queries.qo.as_ref()]
                .into_iter()
                .flatten()
            {
                if query.skipped.is_some() && query.variant == QueryVariant::QuestionAndAnswer {
                    continue;
                }
                let key = (record.item_id.clone(), query.variant, hit.url.clone());
                let score = match scored.get(&key) {
                    Some(score) => *score,
                    None => {
                        if !page_tokens.contains_key(&hit.url) {
                            match engine.page_cached(&hit.url, true) {
                                Ok(page) => {
                                    page_tokens
                                        .insert(hit.url.clone(), normalize(&page.extracted_text));
                                }
                                Err(e) => {
                                    entry.unresolved = Some(format!("rescan fetch failed: {e}"));
                                    continue;
                                }
                            }
                        }
                        let tokens = &page_tokens[&hit.url];
                        let score = best_window_score(&normalize(&query.text), tokens, &params);
                        scored.insert(key, score);
                        score
                    }
                };
                entry.pages.push(ScoredPage {
                    evidence: MatchEvidence::new(query.variant, hit.url.clone(), score),
                    crawl_present: true,
                    crawl_ids: presence.crawl_ids.clone(),
                });
            }
        }
    }

    let (alternate, _) = classify_benchmark(&items, &signals, config.threshold);
    let baseline_by_id: HashMap<&str, &ContaminationVerdict> =
        baseline.iter().map(|v| (v.item_id.as_str(), v)).collect();

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, RescanRow> = HashMap::new();
    for verdict in &alternate {
        let row = rows.entry(verdict.benchmark.clone()).or_insert_with(|| {
            order.push(verdict.benchmark.clone());
            RescanRow {
                benchmark: verdict.benchmark.clone(),
                total: 0,
                baseline_dirty: 0,
                alternate_dirty: 0,
            }
        });
        if matches!(
            verdict.status,
            crate::classifier::ContaminationStatus::Skipped
                | crate::classifier::ContaminationStatus::Unknown
        ) {
            continue;
        }
        row.total += 1;
        if verdict.status.is_dirty() {
            row.alternate_dirty += 1;
        }
        if baseline_by_id
            .get(verdict.item_id.as_str())
            .map(|v| v.status.is_dirty())
            .unwrap_or(false)
        {
            row.baseline_dirty += 1;
        }
    }

    let report = RescanReport {
        baseline_range: config.crawl_range.clone(),
        alternate_range: alternate_range.to_string(),
        rows: order
            .into_iter()
            .map(|b| rows.remove(&b).unwrap())
            .collect(),
    };
    write_text(
        &dir.join(artifact::RESCAN_TSV),
        &report::rescan_tsv(&report),
    )?;
    write_text(
        &dir.join(artifact::RESCAN_TXT),
        &report::rescan_table(&report),
    )?;
    Ok(report)
}
