//! Page fetching and markup-free text extraction.

use std::collections::HashMap;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::sha256_hex;
use super::ratelimit::{Clock, RateLimiter};

/// Bodies above this are rejected rather than truncated.
pub const DEFAULT_FETCH_MAX_BYTES: usize = 2 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network failure fetching {url}: {reason}")]
    Network { url: String, reason: String },
    #[error("{url} is not text content ({content_type})")]
    NonText { url: String, content_type: String },
    #[error("{url} body exceeds the {limit}-byte cap")]
    Oversized { url: String, limit: usize },
    #[error("fetch of {url} failed: {reason}")]
    Fatal { url: String, reason: String },
}

impl FetchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, FetchError::Network { .. })
    }
}

/// A fetched body before extraction.
#[derive(Debug, Clone)]
pub struct RawPage {
    pub body: Vec<u8>,
    pub content_type: Option<String>,
    pub timestamp: u64,
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError>;
}

/// Extracted text of one page. `content_hash` is the SHA-256 of the raw body,
/// so mirrored copies of a page share a hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageText {
    pub url: String,
    pub extracted_text: String,
    pub fetch_timestamp: u64,
    pub content_hash: String,
}

/// Fetches a URL and reduces it to whitespace-normalized text. Script and
/// style content never reaches the output.
pub fn fetch_and_extract(
    fetcher: &dyn PageFetcher,
    url: &str,
    max_bytes: usize,
) -> Result<PageText, FetchError> {
    let raw = fetcher.fetch(url)?;
    if raw.body.len() > max_bytes {
        return Err(FetchError::Oversized {
            url: url.to_string(),
            limit: max_bytes,
        });
    }
    if let Some(ct) = &raw.content_type {
        let essence = ct
            .split(';')
            .next()
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        let is_text = essence.starts_with("text/")
            || essence == "application/xhtml+xml"
            || essence == "application/xml";
        if !is_text {
            return Err(FetchError::NonText {
                url: url.to_string(),
                content_type: essence,
            });
        }
    }
    let html = String::from_utf8_lossy(&raw.body);
    Ok(PageText {
        url: url.to_string(),
        extracted_text: extract_text(&html),
        fetch_timestamp: raw.timestamp,
        content_hash: sha256_hex(&raw.body),
    })
}

/// Strips markup from an HTML document: tags become separators, comments and
/// the contents of script/style elements are dropped, common entities are
/// decoded, and whitespace is collapsed.
pub fn extract_text(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let bytes = html.as_bytes();
    let mut i = 0;

    while i < bytes.len() {
        if bytes[i] == b'<' {
            if html[i..].starts_with("<!--") {
                i = match html[i + 4..].find("-->") {
                    Some(pos) => i + 4 + pos + 3,
                    None => bytes.len(),
                };
                out.push(' ');
                continue;
            }
            let (tag_name, closing, after_tag) = read_tag(html, i);
            out.push(' ');
            i = after_tag;
            let lowered = tag_name.to_ascii_lowercase();
            if !closing && (lowered == "script" || lowered == "style") {
                i = skip_raw_content(html, i, &lowered);
                out.push(' ');
            }
        } else if bytes[i] == b'&' {
            let (decoded, next) = decode_entity(html, i);
            out.push_str(&decoded);
            i = next;
        } else {
            let ch = html[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
    }

    let mut collapsed = String::with_capacity(out.len());
    for word in out.split_whitespace() {
        if !collapsed.is_empty() {
            collapsed.push(' ');
        }
        collapsed.push_str(word);
    }
    collapsed
}

/// Consumes one tag starting at `<`, honoring quoted attribute values, and
/// returns (tag name, is-closing-tag, index after `>`).
fn read_tag(html: &str, start: usize) -> (String, bool, usize) {
    let bytes = html.as_bytes();
    let mut i = start + 1;
    let closing = i < bytes.len() && bytes[i] == b'/';
    if closing {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
        i += 1;
    }
    let name = html[name_start..i].to_string();
    let mut quote: Option<u8> = None;
    while i < bytes.len() {
        match (quote, bytes[i]) {
            (None, b'>') => return (name, closing, i + 1),
            (None, b'"') | (None, b'\'') => quote = Some(bytes[i]),
            (Some(q), c) if c == q => quote = None,
            _ => {}
        }
        i += 1;
    }
    (name, closing, bytes.len())
}

/// Skips to just past the closing tag of a raw-text element (`script`/`style`).
fn skip_raw_content(html: &str, from: usize, tag: &str) -> usize {
    let close = format!("</{tag}");
    let lower = html.to_ascii_lowercase();
    match lower[from..].find(&close) {
        Some(pos) => {
            let close_start = from + pos;
            match html[close_start..].find('>') {
                Some(gt) => close_start + gt + 1,
                None => html.len(),
            }
        }
        None => html.len(),
    }
}

fn decode_entity(html: &str, start: usize) -> (String, usize) {
    let rest = &html[start + 1..];
    let end = match rest.char_indices().take(12).find(|(_, c)| *c == ';') {
        Some((idx, _)) => idx,
        None => return ("&".to_string(), start + 1),
    };
    let name = &rest[..end];
    let next = start + 1 + end + 1;
    let decoded = match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        "nbsp" => Some(' '),
        _ => {
            if let Some(num) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                u32::from_str_radix(num, 16).ok().and_then(char::from_u32)
            } else if let Some(num) = name.strip_prefix('#') {
                num.parse::<u32>().ok().and_then(char::from_u32)
            } else {
                None
            }
        }
    };
    match decoded {
        Some(c) => (c.to_string(), next),
        None => ("&".to_string(), start + 1),
    }
}

/// Serves page bodies from an in-memory map; offline stand-in for the live
/// fetcher. Timestamps are pinned to zero so artifacts reproduce bit-exactly.
#[derive(Default)]
pub struct FixtureFetcher {
    pages: HashMap<String, (Vec<u8>, String)>,
}

impl FixtureFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: &str, body: impl Into<Vec<u8>>, content_type: &str) {
        self.pages
            .insert(url.to_string(), (body.into(), content_type.to_string()));
    }
}

impl PageFetcher for FixtureFetcher {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        match self.pages.get(url) {
            Some((body, content_type)) => Ok(RawPage {
                body: body.clone(),
                content_type: Some(content_type.clone()),
                timestamp: 0,
            }),
            None => Err(FetchError::Fatal {
                url: url.to_string(),
                reason: "url not in fixture corpus".to_string(),
            }),
        }
    }
}

/// Live fetcher. Reads at most `max_bytes + 1` so oversized bodies fail fast
/// without downloading the rest.
pub struct HttpFetcher {
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
    clock: Arc<dyn Clock>,
    max_bytes: usize,
}

impl HttpFetcher {
    pub fn new(limiter: Arc<RateLimiter>, clock: Arc<dyn Clock>, max_bytes: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .build()
            .into();
        HttpFetcher {
            agent,
            limiter,
            clock,
            max_bytes,
        }
    }
}

impl PageFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        self.limiter.acquire();
        let mut response = match self.agent.get(url).call() {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(FetchError::Network {
                    url: url.to_string(),
                    reason: format!("status {code}"),
                })
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(FetchError::Fatal {
                    url: url.to_string(),
                    reason: format!("status {code}"),
                })
            }
            Err(e) => {
                return Err(FetchError::Network {
                    url: url.to_string(),
                    reason: e.to_string(),
                })
            }
        };
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(|s| s.to_string());
        let mut body = Vec::new();
        let mut reader = response
            .body_mut()
            .as_reader()
            .take(self.max_bytes as u64 + 1);
        reader
            .read_to_end(&mut body)
            .map_err(|e| FetchError::Network {
                url: url.to_string(),
                reason: e.to_string(),
            })?;
        if body.len() > self.max_bytes {
            return Err(FetchError::Oversized {
                url: url.to_string(),
                limit: self.max_bytes,
            });
        }
        Ok(RawPage {
            body,
            content_type,
            timestamp: self.clock.unix_timestamp(),
        })
    }
}
