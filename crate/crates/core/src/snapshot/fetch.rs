//! Page and same-origin script retrieval.
//!
//! Transport problems never surface as errors from [`fetch_snapshot`]; they
//! become a snapshot whose status records the failure so liveness accounting
//! can count them.

use std::io::Read;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use regex::bytes::Regex;
use thiserror::Error;
use url::Url;

use super::{FailureKind, FetchStatus, ScriptEntry, SiteSnapshot};

const MAX_REDIRECTS: u32 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("invalid url {0:?}")]
    InvalidUrl(String),
    #[error("unsupported scheme {0:?}; only http and https can be fetched")]
    UnsupportedScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchLimits {
    pub max_bytes: usize,
    pub timeout: Duration,
    pub max_scripts: usize,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits {
            max_bytes: 5 * 1024 * 1024,
            timeout: Duration::from_secs(20),
            max_scripts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub final_url: String,
    pub body: Vec<u8>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl TransportFailure {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        TransportFailure {
            kind,
            message: message.into(),
        }
    }
}

/// Something that can GET a URL, reading at most `max_bytes` of body.
pub trait Transport: Sync {
    fn get(&self, url: &Url, max_bytes: usize) -> Result<Response, TransportFailure>;
}

/// Live HTTP(S) transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .max_redirects(MAX_REDIRECTS)
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent("scout/0.1")
            .build()
            .into();
        HttpTransport { agent }
    }
}

fn classify_ureq(err: &ureq::Error) -> FailureKind {
    use ureq::Error as E;
    match err {
        E::HostNotFound => FailureKind::Dns,
        E::Timeout(_) => FailureKind::Timeout,
        E::ConnectionFailed => FailureKind::Connect,
        E::TooManyRedirects | E::RedirectFailed => FailureKind::Redirect,
        E::Tls(_) => FailureKind::Tls,
        E::Io(e) => match e.kind() {
            std::io::ErrorKind::TimedOut => FailureKind::Timeout,
            std::io::ErrorKind::ConnectionRefused
            | std::io::ErrorKind::ConnectionReset
            | std::io::ErrorKind::ConnectionAborted => FailureKind::Connect,
            _ => FailureKind::Other,
        },
        other => {
            if format!("{other:?}").contains("Tls") {
                FailureKind::Tls
            } else {
                FailureKind::Other
            }
        }
    }
}

fn read_capped(reader: impl Read, max_bytes: usize) -> std::io::Result<(Vec<u8>, bool)> {
    let mut body = Vec::new();
    reader.take(max_bytes as u64 + 1).read_to_end(&mut body)?;
    let truncated = body.len() > max_bytes;
    body.truncate(max_bytes);
    Ok((body, truncated))
}

impl Transport for HttpTransport {
    fn get(&self, url: &Url, max_bytes: usize) -> Result<Response, TransportFailure> {
        use ureq::ResponseExt;
        let mut resp = self
            .agent
            .get(url.as_str())
            .call()
            .map_err(|e| TransportFailure::new(classify_ureq(&e), e.to_string()))?;
        let status = resp.status().as_u16();
        let final_url = resp.get_uri().to_string();
        let reader = resp.body_mut().with_config().limit(u64::MAX).reader();
        let (body, truncated) = read_capped(reader, max_bytes).map_err(|e| {
            let kind = if e.kind() == std::io::ErrorKind::TimedOut {
                FailureKind::Timeout
            } else {
                FailureKind::Other
            };
            TransportFailure::new(kind, e.to_string())
        })?;
        Ok(Response {
            status,
            final_url,
            body,
            truncated,
        })
    }
}

/// Serves `<root>/<host>/<path>` from disk; a path ending in `/` maps to
/// `index.html`. Unknown hosts behave like DNS failures and unknown paths
/// like 404s.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    root: PathBuf,
}

impl FixtureTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureTransport { root: root.into() }
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &Url, max_bytes: usize) -> Result<Response, TransportFailure> {
        let host = url.host_str().unwrap_or_default();
        let host_dir = self.root.join(host);
        if host.is_empty() || !host_dir.is_dir() {
            return Err(TransportFailure::new(
                FailureKind::Dns,
                format!("no fixture host {host:?}"),
            ));
        }
        let mut rel = url.path().trim_start_matches('/').to_string();
        if rel.is_empty() || rel.ends_with('/') {
            rel.push_str("index.html");
        }
        if rel.split('/').any(|seg| seg == "..") {
            return Err(TransportFailure::new(
                FailureKind::Other,
                "path escapes fixture root",
            ));
        }
        match std::fs::File::open(host_dir.join(&rel)) {
            Ok(f) => {
                let (body, truncated) = read_capped(f, max_bytes)
                    .map_err(|e| TransportFailure::new(FailureKind::Other, e.to_string()))?;
                Ok(Response {
                    status: 200,
                    final_url: url.to_string(),
                    body,
                    truncated,
                })
            }
            Err(_) => Ok(Response {
                status: 404,
                final_url: url.to_string(),
                body: Vec::new(),
                truncated: false,
            }),
        }
    }
}

fn script_src_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?is)<script\b[^>]*?\bsrc\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap()
    })
}

fn same_origin(a: &Url, b: &Url) -> bool {
    a.scheme() == b.scheme()
        && a.host_str() == b.host_str()
        && a.port_or_known_default() == b.port_or_known_default()
}

/// Same-origin external script URLs in document order, deduplicated.
pub(crate) fn same_origin_scripts(html: &[u8], base: &Url) -> Vec<Url> {
    let mut out: Vec<Url> = Vec::new();
    for cap in script_src_re().captures_iter(html) {
        let raw = cap
            .get(1)
            .or_else(|| cap.get(2))
            .or_else(|| cap.get(3))
            .map(|m| m.as_bytes())
            .unwrap_or_default();
        let Ok(raw) = std::str::from_utf8(raw) else {
            continue;
        };
        let Ok(mut resolved) = base.join(raw.trim()) else {
            continue;
        };
        resolved.set_fragment(None);
        if same_origin(&resolved, base) && !out.contains(&resolved) {
            out.push(resolved);
        }
    }
    out
}

/// Captures `url` and up to `limits.max_scripts` same-origin scripts.
pub fn fetch_snapshot(
    url: &str,
    limits: &FetchLimits,
    transport: &dyn Transport,
    fetched_at: DateTime<Utc>,
) -> Result<SiteSnapshot, FetchError> {
    let parsed = Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(FetchError::UnsupportedScheme(parsed.scheme().to_string()));
    }
    let page = match transport.get(&parsed, limits.max_bytes) {
        Ok(r) => r,
        Err(f) => return Ok(SiteSnapshot::failed(url, fetched_at, f.kind, f.message)),
    };
    let final_url = Url::parse(&page.final_url).unwrap_or_else(|_| parsed.clone());
    let mut scripts = Vec::new();
    if (200..300).contains(&page.status) {
        for src in same_origin_scripts(&page.body, &final_url)
            .into_iter()
            .take(limits.max_scripts)
        {
            match transport.get(&src, limits.max_bytes) {
                Ok(r) if (200..300).contains(&r.status) => scripts.push(ScriptEntry {
                    url: src.to_string(),
                    body: r.body,
                }),
                Ok(r) => log::debug!("script {src} returned {}", r.status),
                Err(f) => log::debug!("script {src} failed: {}", f.message),
            }
        }
    }
    Ok(SiteSnapshot::new(
        url,
        final_url.to_string(),
        fetched_at,
        FetchStatus::Http { code: page.status },
        page.body,
        page.truncated,
        scripts,
    ))
}

/// Fetches every URL with at most `parallelism` concurrent requests,
/// preserving input order.
pub fn fetch_all(
    urls: &[String],
    limits: &FetchLimits,
    transport: &dyn Transport,
    parallelism: usize,
    fetched_at: DateTime<Utc>,
) -> Vec<Result<SiteSnapshot, FetchError>> {
    let run = || {
        urls.par_iter()
            .map(|u| fetch_snapshot(u, limits, transport, fetched_at))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => urls
            .iter()
            .map(|u| fetch_snapshot(u, limits, transport, fetched_at))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Url {
        Url::parse("https://mint.example.xyz/drop/").unwrap()
    }

    #[test]
    fn script_extraction_keeps_same_origin_only() {
        let html = br#"<script src="/a.js"></script><script type="module" src='b.js'></script>
            <script src="https://cdn.other.com/x.js"></script><script>inline()</script>
            <SCRIPT SRC=/a.js></SCRIPT><script src="http://mint.example.xyz/c.js"></script>"#;
        let got: Vec<String> = same_origin_scripts(html, &base())
            .iter()
            .map(Url::to_string)
            .collect();
        assert_eq!(
            got,
            vec![
                "https://mint.example.xyz/a.js",
                "https://mint.example.xyz/drop/b.js"
            ]
        );
    }

    #[test]
    fn rejects_non_http_scheme() {
        let t = FixtureTransport::new("/nonexistent");
        let e = fetch_snapshot(
            "ftp://x.com/",
            &FetchLimits::default(),
            &t,
            DateTime::UNIX_EPOCH,
        )
        .unwrap_err();
        assert_eq!(e, FetchError::UnsupportedScheme("ftp".into()));
    }

    #[test]
    fn fixture_transport_maps_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a.xyz/js")).unwrap();
        std::fs::write(
            dir.path().join("a.xyz/index.html"),
            r#"<script src="/js/m.js"></script>"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("a.xyz/js/m.js"), "window.ethereum").unwrap();
        let t = FixtureTransport::new(dir.path());
        let s = fetch_snapshot(
            "https://a.xyz/",
            &FetchLimits::default(),
            &t,
            DateTime::UNIX_EPOCH,
        )
        .unwrap();
        assert_eq!(s.status, FetchStatus::Http { code: 200 });
        assert_eq!(s.scripts.len(), 1);
        assert_eq!(s.scripts[0].body, b"window.ethereum");

        let gone = fetch_snapshot(
            "https://b.xyz/",
            &FetchLimits::default(),
            &t,
            DateTime::UNIX_EPOCH,
        )
        .unwrap();
        assert!(matches!(
            gone.status,
            FetchStatus::TransportFailure {
                kind: FailureKind::Dns,
                ..
            }
        ));
        assert!(gone.html.is_empty());

        let missing = fetch_snapshot(
            "https://a.xyz/nope",
            &FetchLimits::default(),
            &t,
            DateTime::UNIX_EPOCH,
        )
        .unwrap();
        assert_eq!(missing.status, FetchStatus::Http { code: 404 });
    }

    #[test]
    fn read_capped_flags_truncation() {
        let (b, t) = read_capped(&b"abcdef"[..], 4).unwrap();
        assert_eq!((b.as_slice(), t), (&b"abcd"[..], true));
        let (b, t) = read_capped(&b"abcd"[..], 4).unwrap();
        assert_eq!((b.as_slice(), t), (&b"abcd"[..], false));
    }
}
