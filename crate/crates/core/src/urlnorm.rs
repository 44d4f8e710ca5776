//! URL canonicalization and registrable-domain extraction.
//!
//! Canonical form is scheme-insensitive: lowercased host, default port
//! stripped, fragment dropped. It is the key used for crawl-index lookups and
//! exact-link blocklist matching.

use thiserror::Error;
use url::Url;

#[derive(Debug, Error, PartialEq)]
pub enum UrlError {
    #[error("unparseable url {0:?}")]
    Unparseable(String),
    #[error("url {0:?} has no host")]
    NoHost(String),
}

fn parse_lenient(raw: &str) -> Result<Url, UrlError> {
    let trimmed = raw.trim();
    match Url::parse(trimmed) {
        Ok(u) if u.host_str().is_some() => Ok(u),
        // Bare `example.com/path` lines parse once given a scheme.
        _ => Url::parse(&format!("http://{trimmed}"))
            .ok()
            .filter(|u| u.host_str().is_some())
            .ok_or_else(|| UrlError::Unparseable(raw.to_string())),
    }
}

/// Canonicalizes a URL to `host[:port]/path[?query]`. The scheme is dropped,
/// the host lowercased, and default ports (80/443) removed.
pub fn canonical_url(raw: &str) -> Result<String, UrlError> {
    let url = parse_lenient(raw)?;
    let host = url
        .host_str()
        .ok_or_else(|| UrlError::NoHost(raw.to_string()))?
        .to_ascii_lowercase();
    let mut out = host;
    if let Some(port) = url.port() {
        // `Url::port` is already None for the scheme's default port, but a
        // scheme-insensitive key must also drop the other scheme's default.
        if port != 80 && port != 443 {
            out.push_str(&format!(":{port}"));
        }
    }
    let path = url.path();
    out.push_str(if path.is_empty() { "/" } else { path });
    if let Some(q) = url.query() {
        out.push('?');
        out.push_str(q);
    }
    Ok(out)
}

/// Multi-label public suffixes consulted by [`registrable_domain`]. Single
/// labels (`com`, `org`, ...) are always treated as suffixes, so only
/// compound entries need listing here.
const MULTI_LABEL_SUFFIXES: &[&str] = &[
    "ac.jp",
    "ac.uk",
    "co.il",
    "co.in",
    "co.jp",
    "co.kr",
    "co.nz",
    "co.uk",
    "co.za",
    "com.ar",
    "com.au",
    "com.br",
    "com.cn",
    "com.hk",
    "com.mx",
    "com.sg",
    "com.tr",
    "com.tw",
    "edu.au",
    "edu.cn",
    "gov.cn",
    "gov.uk",
    "ne.jp",
    "net.au",
    "net.cn",
    "or.jp",
    "org.au",
    "org.cn",
    "org.uk",
    "blogspot.com",
    "github.io",
    "gitlab.io",
];

/// Registrable domain (public suffix plus one label) of a URL or bare host.
/// IP addresses and plain suffixes have none.
pub fn registrable_domain(raw: &str) -> Option<String> {
    let url = parse_lenient(raw).ok()?;
    let host = match url.host()? {
        url::Host::Domain(d) => d.to_ascii_lowercase(),
        url::Host::Ipv4(_) | url::Host::Ipv6(_) => return None,
    };
    let labels: Vec<&str> = host.split('.').collect();
    if labels.len() < 2 || labels.iter().any(|l| l.is_empty()) {
        return None;
    }
    let mut suffix_len = 1;
    for len in 2..=labels.len() {
        let candidate = labels[labels.len() - len..].join(".");
        if MULTI_LABEL_SUFFIXES.contains(&candidate.as_str()) {
            suffix_len = len;
        }
    }
    if labels.len() == suffix_len {
        return None;
    }
    Some(labels[labels.len() - suffix_len - 1..].join("."))
}
