//! Web-search providers: a deterministic mock over a fixture corpus for
//! offline runs, and a live HTTP client for paid search APIs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ratelimit::RateLimiter;
use crate::text_match::normalize;

#[derive(Debug, Error)]
pub enum ProviderError {
    /// The provider refused the query for its length; the item is skipped.
    #[error("provider rejected over-length query ({0} chars)")]
    QueryTooLong(usize),
    /// Transient failure (quota, timeout, 5xx); worth retrying.
    #[error("retryable provider failure: {0}")]
    Retryable(String),
    /// Permanent failure (bad credentials, malformed endpoint).
    #[error("fatal provider failure: {0}")]
    Fatal(String),
}

/// One result returned by a provider; rank is its position in the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderHit {
    pub url: String,
    pub snippet: Option<String>,
}

/// A ranked search result tied back to the query's item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub query_id: String,
    pub url: String,
    pub rank: usize,
    pub snippet: Option<String>,
}

pub trait SearchProvider: Send + Sync {
    fn name(&self) -> &str;
    fn search(&self, query_text: &str, top_k: usize) -> Result<Vec<ProviderHit>, ProviderError>;
}

/// Deterministic search over an in-memory document set. Ranks by the fraction
/// of distinct query tokens present in a document, ties broken by URL.
pub struct MockSearchProvider {
    postings: HashMap<String, Vec<u32>>,
    urls: Vec<String>,
    query_length_cap: usize,
    calls: AtomicUsize,
}

impl MockSearchProvider {
    pub fn new<'a>(
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        query_length_cap: usize,
    ) -> Self {
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut urls = Vec::new();
        for (url, text) in docs {
            let doc_id = urls.len() as u32;
            urls.push(url.to_string());
            let mut seen = std::collections::HashSet::new();
            for tok in normalize(text).tokens() {
                if seen.insert(tok.clone()) {
                    postings.entry(tok.clone()).or_default().push(doc_id);
                }
            }
        }
        MockSearchProvider {
            postings,
            urls,
            query_length_cap,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of times `search` was invoked; used to assert cache behavior.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchProvider for MockSearchProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn search(&self, query_text: &str, top_k: usize) -> Result<Vec<ProviderHit>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let chars = query_text.chars().count();
        if chars > self.query_length_cap {
            return Err(ProviderError::QueryTooLong(chars));
        }
        let mut distinct: Vec<&String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let tokens = normalize(query_text);
        for tok in tokens.tokens() {
            if seen.insert(tok.as_str()) {
                distinct.push(tok);
            }
        }
        if distinct.is_empty() {
            return Ok(Vec::new());
        }
        let mut overlap: HashMap<u32, u32> = HashMap::new();
        for tok in &distinct {
            if let Some(docs) = self.postings.get(tok.as_str()) {
                for &d in docs {
                    *overlap.entry(d).or_insert(0) += 1;
                }
            }
        }
        let mut scored: Vec<(u32, &str)> = overlap
            .into_iter()
            .map(|(d, hits)| (hits, self.urls[d as usize].as_str()))
            .collect();
        scored.sort_unstable_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(top_k)
            .map(|(_, url)| ProviderHit {
                url: url.to_string(),
                snippet: None,
            })
            .collect())
    }
}

/// Live search client speaking the common `?q=...&count=N` JSON shape with a
/// subscription-key header. The API key is read from the named environment
/// variable at call time.
pub struct HttpSearchProvider {
    agent: ureq::Agent,
    endpoint: String,
    api_key_env: String,
    query_length_cap: usize,
    limiter: Arc<RateLimiter>,
}

impl HttpSearchProvider {
    pub fn new(
        endpoint: impl Into<String>,
        api_key_env: impl Into<String>,
        query_length_cap: usize,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(30)))
            .build()
            .into();
        HttpSearchProvider {
            agent,
            endpoint: endpoint.into(),
            api_key_env: api_key_env.into(),
            query_length_cap,
            limiter,
        }
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(rename = "webPages", default)]
    web_pages: Option<WebPages>,
}

#[derive(Deserialize)]
struct WebPages {
    #[serde(default)]
    value: Vec<WebPage>,
}

#[derive(Deserialize)]
struct WebPage {
    url: String,
    #[serde(default)]
    snippet: Option<String>,
}

impl SearchProvider for HttpSearchProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn search(&self, query_text: &str, top_k: usize) -> Result<Vec<ProviderHit>, ProviderError> {
        let chars = query_text.chars().count();
        if chars > self.query_length_cap {
            return Err(ProviderError::QueryTooLong(chars));
        }
        let key = std::env::var(&self.api_key_env).map_err(|_| {
            ProviderError::Fatal(format!("api key env var {} not set", self.api_key_env))
        })?;
        self.limiter.acquire();
        let result = self
            .agent
            .get(&self.endpoint)
            .query("q", query_text)
            .query("count", top_k.to_string())
            .header("Ocp-Apim-Subscription-Key", &key)
            .call();
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(ProviderError::Retryable(format!("status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(ProviderError::Fatal(format!("status {code}")))
            }
            Err(e) => return Err(ProviderError::Retryable(e.to_string())),
        };
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Retryable(e.to_string()))?;
        let parsed: SearchResponse = serde_json::from_str(&body)
            .map_err(|e| ProviderError::Fatal(format!("unparseable search response: {e}")))?;
        Ok(parsed
            .web_pages
            .map(|w| w.value)
            .unwrap_or_default()
            .into_iter()
            .take(top_k)
            .map(|p| ProviderHit {
                url: p.url,
                snippet: p.snippet,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> MockSearchProvider {
        MockSearchProvider::new(
            [
                (
                    "https://psych.example.org/act",
                    "The flaw in Anderson's ACT theory was that some considered it \
                     untestable and thus, of uncertain scientific value.",
                ),
                (
                    "https://other.example.org/a",
                    "completely unrelated text about weather",
                ),
                (
                    "https://other.example.org/b",
                    "anderson wrote a theory of cognition",
                ),
            ],
            500,
        )
    }

    #[test]
    fn planted_page_ranks_first() {
        let provider = corpus();
        let hits = provider
            .search(
                "The flaw in Anderson's ACT theory was that some considered it untestable \
                 and thus, of uncertain scientific value.",
                10,
            )
            .unwrap();
        assert_eq!(hits[0].url, "https://psych.example.org/act");
    }

    #[test]
    fn zero_overlap_returns_no_hits() {
        let provider = corpus();
        let hits = provider.search("zz yy xx qq", 10).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn over_length_query_is_rejected() {
        let provider = corpus();
        let long = "w".repeat(501);
        match provider.search(&long, 10) {
            Err(ProviderError::QueryTooLong(n)) => assert_eq!(n, 501),
            other => panic!("expected QueryTooLong, got {other:?}"),
        }
    }

    #[test]
    fn ranking_is_deterministic_with_url_tiebreak() {
        let provider = MockSearchProvider::new(
            [
                ("https://b.example/x", "alpha beta"),
                ("https://a.example/x", "alpha beta"),
            ],
            500,
        );
        let hits = provider.search("alpha beta", 10).unwrap();
        assert_eq!(hits[0].url, "https://a.example/x");
        assert_eq!(hits[1].url, "https://b.example/x");
    }

    #[test]
    fn top_k_truncates() {
        let provider = corpus();
        let hits = provider.search("anderson theory", 1).unwrap();
        assert_eq!(hits.len(), 1);
    }
}
