//! Candidate-page discovery: search, crawl-index verification, and page
//! fetching, all behind an on-disk cache so reruns are free and offline.

pub mod cache;
pub mod cdx;
pub mod fetch;
pub mod provider;
pub mod ratelimit;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use cache::DiskCache;
use cdx::{
    check_crawl_presence, CrawlIndexClient, CrawlPresence, CrawlRange, FixtureCdxClient, IndexError,
};
use fetch::{fetch_and_extract, FetchError, FixtureFetcher, PageFetcher, PageText};
use provider::{MockSearchProvider, ProviderError, ProviderHit, SearchProvider};
use ratelimit::Clock;

#[derive(Debug, Clone)]
pub struct DiscoveryConfig {
    pub top_k: usize,
    pub crawl_range: CrawlRange,
    pub primary_language: String,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub fetch_max_bytes: usize,
    /// Operator override: fetch pages even when crawl-absent.
    pub allow_crawl_absent_fetch: bool,
}

/// Runs discovery operations with caching and retry. Warm-cache calls touch
/// no provider, index, or fetcher at all.
pub struct DiscoveryEngine {
    provider: Arc<dyn SearchProvider>,
    index: Arc<dyn CrawlIndexClient>,
    fetcher: Arc<dyn PageFetcher>,
    clock: Arc<dyn Clock>,
    cache: DiskCache,
    config: DiscoveryConfig,
}

impl DiscoveryEngine {
    pub fn new(
        provider: Arc<dyn SearchProvider>,
        index: Arc<dyn CrawlIndexClient>,
        fetcher: Arc<dyn PageFetcher>,
        clock: Arc<dyn Clock>,
        cache: DiskCache,
        config: DiscoveryConfig,
    ) -> Self {
        DiscoveryEngine {
            provider,
            index,
            fetcher,
            clock,
            cache,
            config,
        }
    }

    pub fn config(&self) -> &DiscoveryConfig {
        &self.config
    }

    fn retry<T, E>(
        &self,
        mut attempt: impl FnMut() -> Result<T, E>,
        retryable: impl Fn(&E) -> bool,
    ) -> Result<T, E> {
        let mut tries = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) if retryable(&e) && tries < self.config.max_retries => {
                    let backoff = self.config.backoff_base * 2u32.saturating_pow(tries);
                    self.clock.sleep(backoff);
                    tries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Search results for a query text, cached by query-text hash.
    pub fn search_cached(&self, query_text: &str) -> Result<Vec<ProviderHit>, ProviderError> {
        let key = DiskCache::key_for(&[
            "search",
            self.provider.name(),
            &self.config.top_k.to_string(),
            query_text,
        ]);
        if let Some(bytes) = self.cache.get("search", &key) {
            if let Ok(hits) = serde_json::from_slice(&bytes) {
                return Ok(hits);
            }
        }
        let hits = self.retry(
            || self.provider.search(query_text, self.config.top_k),
            |e| matches!(e, ProviderError::Retryable(_)),
        )?;
        let bytes = serde_json::to_vec(&hits)
            .map_err(|e| ProviderError::Fatal(format!("cache encode: {e}")))?;
        self.cache
            .put("search", &key, &bytes)
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(hits)
    }

    /// Crawl presence for a URL within the configured range, cached per
    /// (range, language, canonical url).
    pub fn presence_cached(&self, url: &str) -> Result<CrawlPresence, IndexError> {
        let canonical =
            crate::urlnorm::canonical_url(url).map_err(|e| IndexError::Fatal(e.to_string()))?;
        let key = DiskCache::key_for(&[
            "cdx",
            &self.config.crawl_range.to_string(),
            &self.config.primary_language,
            &canonical,
        ]);
        if let Some(bytes) = self.cache.get("cdx", &key) {
            if let Ok(presence) = serde_json::from_slice(&bytes) {
                return Ok(presence);
            }
        }
        let presence = self.retry(
            || {
                check_crawl_presence(
                    self.index.as_ref(),
                    url,
                    &self.config.crawl_range,
                    &self.config.primary_language,
                )
            },
            |e| matches!(e, IndexError::Unavailable(_)),
        )?;
        let bytes = serde_json::to_vec(&presence)
            .map_err(|e| IndexError::Fatal(format!("cache encode: {e}")))?;
        self.cache
            .put("cdx", &key, &bytes)
            .map_err(|e| IndexError::Fatal(e.to_string()))?;
        Ok(presence)
    }

    /// Fetches and extracts a page, cached by URL. Refuses crawl-absent URLs
    /// unless the operator override is set.
    pub fn page_cached(&self, url: &str, crawl_present: bool) -> Result<PageText, FetchError> {
        if !crawl_present && !self.config.allow_crawl_absent_fetch {
            return Err(FetchError::Fatal {
                url: url.to_string(),
                reason: "url is not crawl-present and the override flag is off".to_string(),
            });
        }
        let key = DiskCache::key_for(&["fetch", url]);
        if let Some(bytes) = self.cache.get("fetch", &key) {
            if let Ok(page) = serde_json::from_slice(&bytes) {
                return Ok(page);
            }
        }
        let page = self.retry(
            || fetch_and_extract(self.fetcher.as_ref(), url, self.config.fetch_max_bytes),
            |e| e.is_retryable(),
        )?;
        let bytes = serde_json::to_vec(&page).map_err(|e| FetchError::Fatal {
            url: url.to_string(),
            reason: format!("cache encode: {e}"),
        })?;
        self.cache
            .put("fetch", &key, &bytes)
            .map_err(|e| FetchError::Fatal {
                url: url.to_string(),
                reason: e.to_string(),
            })?;
        Ok(page)
    }
}

/// One document of an offline fixture corpus. Drives all three discovery
/// backends: the mock search index, the fixture crawl index, and the fixture
/// fetcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDoc {
    pub url: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<String>,
    #[serde(default)]
    pub crawls: Vec<String>,
}

pub fn load_fixture_corpus(path: &Path) -> std::io::Result<Vec<FixtureDoc>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: FixtureDoc = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("corpus line {}: {e}", idx + 1),
            )
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub struct FixtureBackends {
    pub provider: Arc<MockSearchProvider>,
    pub index: Arc<FixtureCdxClient>,
    pub fetcher: Arc<FixtureFetcher>,
}

/// Builds the three offline backends from one corpus.
pub fn fixture_backends(docs: &[FixtureDoc], query_length_cap: usize) -> FixtureBackends {
    let provider = MockSearchProvider::new(
        docs.iter().map(|d| (d.url.as_str(), d.text.as_str())),
        query_length_cap,
    );
    let mut index = FixtureCdxClient::new();
    let mut fetcher = FixtureFetcher::new();
    for doc in docs {
        for crawl in &doc.crawls {
            let id = crawl.parse().expect("fixture crawl id must parse");
            index.insert(id, &doc.url, doc.languages.as_deref());
        }
        match &doc.html {
            Some(html) => fetcher.insert(&doc.url, html.as_bytes().to_vec(), "text/html"),
            None => fetcher.insert(&doc.url, doc.text.as_bytes().to_vec(), "text/plain"),
        }
    }
    FixtureBackends {
        provider: Arc::new(provider),
        index: Arc::new(index),
        fetcher: Arc::new(fetcher),
    }
}
