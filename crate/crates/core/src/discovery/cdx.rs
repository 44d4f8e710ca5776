//! Crawl-index presence checks: is a URL captured in any crawl snapshot of a
//! configured range? Lookups are URL-keyed per crawl, so no page content is
//! ever downloaded from the archive.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ratelimit::RateLimiter;
use crate::urlnorm::canonical_url;

/// A crawl snapshot identifier, e.g. `2017-04` (ISO year-week).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CrawlId {
    pub year: u16,
    pub week: u8,
}

impl FromStr for CrawlId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("CC-MAIN-").unwrap_or(s);
        let (year, week) = s
            .split_once('-')
            .ok_or_else(|| format!("bad crawl id {s:?} (expected YYYY-WW)"))?;
        let year: u16 = year
            .parse()
            .map_err(|_| format!("bad crawl year in {s:?}"))?;
        let week: u8 = week
            .parse()
            .map_err(|_| format!("bad crawl week in {s:?}"))?;
        Ok(CrawlId { year, week })
    }
}

impl std::fmt::Display for CrawlId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{:02}", self.year, self.week)
    }
}

/// Inclusive interval of crawl ids, e.g. `2017-01..2020-52`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrawlRange {
    pub start: CrawlId,
    pub end: CrawlId,
}

impl CrawlRange {
    pub fn new(start: CrawlId, end: CrawlId) -> Self {
        CrawlRange { start, end }
    }

    pub fn contains(&self, id: &CrawlId) -> bool {
        *id >= self.start && *id <= self.end
    }
}

impl FromStr for CrawlRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("bad crawl range {s:?} (expected A..B)"))?;
        let start: CrawlId = a.parse()?;
        let end: CrawlId = b.parse()?;
        if start > end {
            return Err(format!("crawl range {s:?} is reversed"));
        }
        Ok(CrawlRange { start, end })
    }
}

impl std::fmt::Display for CrawlRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// One capture record from a crawl index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdxRecord {
    pub url: String,
    /// Comma-separated language tags when the index annotated them.
    pub languages: Option<String>,
}

#[derive(Debug, Error)]
pub enum IndexError {
    /// Endpoint unreachable or overloaded; retried with backoff, then the URL
    /// is surfaced as unresolved rather than treated as absent.
    #[error("crawl index unavailable: {0}")]
    Unavailable(String),
    #[error("crawl index failure: {0}")]
    Fatal(String),
}

pub trait CrawlIndexClient: Send + Sync {
    /// All snapshots the index knows about.
    fn crawl_ids(&self) -> Result<Vec<CrawlId>, IndexError>;
    /// Capture records for a canonical URL within one snapshot.
    fn lookup(&self, crawl: &CrawlId, canonical_url: &str) -> Result<Vec<CdxRecord>, IndexError>;
}

/// Presence of a URL in the configured crawl range after language filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlPresence {
    pub url: String,
    pub crawl_ids: Vec<String>,
    pub language_tag: Option<String>,
    pub present: bool,
}

/// True when the record may belong to the evaluated language: either the
/// index gave no language (unknown pages are retained) or the primary
/// language appears among the tags.
fn language_retained(record: &CdxRecord, primary: &str) -> bool {
    match &record.languages {
        None => true,
        Some(tags) => tags.split(',').any(|t| t.trim() == primary),
    }
}

/// Checks each snapshot of `range` for captures of `url`, canonicalizing
/// first and keeping only pages in the primary language or with no language
/// tag. `present` holds exactly when at least one snapshot retained a record.
pub fn check_crawl_presence(
    client: &dyn CrawlIndexClient,
    url: &str,
    range: &CrawlRange,
    primary_language: &str,
) -> Result<CrawlPresence, IndexError> {
    let canonical = canonical_url(url).map_err(|e| IndexError::Fatal(e.to_string()))?;
    let mut ids: Vec<CrawlId> = client
        .crawl_ids()?
        .into_iter()
        .filter(|id| range.contains(id))
        .collect();
    ids.sort_unstable();
    let mut crawl_ids = Vec::new();
    let mut language_tag = None;
    for id in ids {
        let records = client.lookup(&id, &canonical)?;
        let mut retained = false;
        for record in records {
            if language_tag.is_none() {
                language_tag = record.languages.clone();
            }
            if language_retained(&record, primary_language) {
                retained = true;
            }
        }
        if retained {
            crawl_ids.push(id.to_string());
        }
    }
    Ok(CrawlPresence {
        url: url.to_string(),
        present: !crawl_ids.is_empty(),
        crawl_ids,
        language_tag,
    })
}

/// In-memory index snapshot for offline runs: crawl id -> canonical url ->
/// records.
#[derive(Default)]
pub struct FixtureCdxClient {
    snapshots: BTreeMap<CrawlId, BTreeMap<String, Vec<CdxRecord>>>,
}

impl FixtureCdxClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, crawl: CrawlId, url: &str, languages: Option<&str>) {
        let canonical = canonical_url(url).expect("fixture url must parse");
        self.snapshots
            .entry(crawl)
            .or_default()
            .entry(canonical)
            .or_default()
            .push(CdxRecord {
                url: url.to_string(),
                languages: languages.map(|s| s.to_string()),
            });
    }
}

impl CrawlIndexClient for FixtureCdxClient {
    fn crawl_ids(&self) -> Result<Vec<CrawlId>, IndexError> {
        Ok(self.snapshots.keys().copied().collect())
    }

    fn lookup(&self, crawl: &CrawlId, canonical: &str) -> Result<Vec<CdxRecord>, IndexError> {
        Ok(self
            .snapshots
            .get(crawl)
            .and_then(|m| m.get(canonical))
            .cloned()
            .unwrap_or_default())
    }
}

/// Client for the public CDX-style lookup API: per-crawl endpoints keyed by
/// URL, JSON line responses, page-numbered pagination.
pub struct HttpCdxClient {
    agent: ureq::Agent,
    base: String,
    limiter: Arc<RateLimiter>,
    known_crawls: OnceLock<Vec<CrawlId>>,
}

impl HttpCdxClient {
    pub fn new(base: impl Into<String>, limiter: Arc<RateLimiter>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .build()
            .into();
        HttpCdxClient {
            agent,
            base: base.into().trim_end_matches('/').to_string(),
            limiter,
            known_crawls: OnceLock::new(),
        }
    }

    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<(u16, String), IndexError> {
        self.limiter.acquire();
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        match req.call() {
            Ok(mut res) => {
                let status = res.status().as_u16();
                let body = res
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| IndexError::Unavailable(e.to_string()))?;
                Ok((status, body))
            }
            // 404 from the index means "no captures", not an outage.
            Err(ureq::Error::StatusCode(404)) => Ok((404, String::new())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(IndexError::Unavailable(format!("status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(IndexError::Fatal(format!("status {code}"))),
            Err(e) => Err(IndexError::Unavailable(e.to_string())),
        }
    }
}

#[derive(Deserialize)]
struct CollInfoEntry {
    id: String,
}

#[derive(Deserialize)]
struct PageCount {
    #[serde(default)]
    pages: u32,
}

#[derive(Deserialize)]
struct CdxLine {
    url: String,
    #[serde(default)]
    languages: Option<String>,
}

impl CrawlIndexClient for HttpCdxClient {
    fn crawl_ids(&self) -> Result<Vec<CrawlId>, IndexError> {
        if let Some(ids) = self.known_crawls.get() {
            return Ok(ids.clone());
        }
        let (status, body) = self.get(&format!("{}/collinfo.json", self.base), &[])?;
        if status != 200 {
            return Err(IndexError::Unavailable(format!(
                "collinfo.json returned status {status}"
            )));
        }
        let entries: Vec<CollInfoEntry> = serde_json::from_str(&body)
            .map_err(|e| IndexError::Fatal(format!("unparseable collinfo.json: {e}")))?;
        let mut ids = Vec::new();
        for entry in entries {
            if let Ok(id) = entry.id.parse::<CrawlId>() {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        let _ = self.known_crawls.set(ids.clone());
        Ok(ids)
    }

    fn lookup(&self, crawl: &CrawlId, canonical: &str) -> Result<Vec<CdxRecord>, IndexError> {
        let endpoint = format!("{}/CC-MAIN-{}-index", self.base, crawl);
        let (status, body) = self.get(
            &endpoint,
            &[
                ("url", canonical),
                ("output", "json"),
                ("showNumPages", "true"),
            ],
        )?;
        if status == 404 {
            return Ok(Vec::new());
        }
        let pages = serde_json::from_str::<PageCount>(body.trim())
            .map(|p| p.pages)
            .unwrap_or(1)
            .max(1);
        let mut records = Vec::new();
        for page in 0..pages {
            let page_str = page.to_string();
            let (status, body) = self.get(
                &endpoint,
                &[("url", canonical), ("output", "json"), ("page", &page_str)],
            )?;
            if status == 404 {
                continue;
            }
            for line in body.lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                match serde_json::from_str::<CdxLine>(line) {
                    Ok(rec) => records.push(CdxRecord {
                        url: rec.url,
                        languages: rec.languages,
                    }),
                    Err(_) => continue,
                }
            }
        }
        Ok(records)
    }
}
