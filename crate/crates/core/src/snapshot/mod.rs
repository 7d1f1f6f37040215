//! Immutable site captures, their content fingerprints and the on-disk
//! corpus they are stored in.
//!
//! A snapshot is identified by a SHA-256 over `(url, html, scripts)` so two
//! captures of byte-identical content share an id regardless of when they
//! were fetched.

mod fetch;
mod fingerprint;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fetch::{
    fetch_all, fetch_snapshot, FetchError, FetchLimits, FixtureTransport, HttpTransport, Response,
    Transport, TransportFailure,
};
pub use fingerprint::{content_fingerprint, jaccard, token_set, tokenize, NULL_FINGERPRINT};
pub use store::{list_snapshots, load_snapshot, store_snapshot, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Dns,
    Timeout,
    Tls,
    Connect,
    Redirect,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FetchStatus {
    Http { code: u16 },
    TransportFailure { kind: FailureKind, message: String },
}

impl FetchStatus {
    /// A 2xx response.
    pub fn is_success(&self) -> bool {
        matches!(self, FetchStatus::Http { code } if (200..300).contains(code))
    }

    pub fn is_transport_failure(&self) -> bool {
        matches!(self, FetchStatus::TransportFailure { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub url: String,
    #[serde(skip)]
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSnapshot {
    pub url: String,
    /// URL after redirects; equals `url` when none were followed.
    pub final_url: String,
    pub fetched_at: DateTime<Utc>,
    pub status: FetchStatus,
    pub html: Vec<u8>,
    pub truncated: bool,
    pub scripts: Vec<ScriptEntry>,
    pub content_fingerprint: u64,
    pub snapshot_id: String,
}

impl SiteSnapshot {
    /// Assembles a snapshot, deriving its fingerprint and id.
    pub fn new(
        url: impl Into<String>,
        final_url: impl Into<String>,
        fetched_at: DateTime<Utc>,
        status: FetchStatus,
        html: Vec<u8>,
        truncated: bool,
        scripts: Vec<ScriptEntry>,
    ) -> Self {
        let url = url.into();
        let snapshot_id = snapshot_id(&url, &html, &scripts);
        let content_fingerprint = fingerprint::fingerprint_parts(&html, &scripts);
        SiteSnapshot {
            url,
            final_url: final_url.into(),
            fetched_at,
            status,
            html,
            truncated,
            scripts,
            content_fingerprint,
            snapshot_id,
        }
    }

    /// A successful 200 capture with no redirect; convenient for fixtures.
    pub fn from_content(
        url: &str,
        html: impl Into<Vec<u8>>,
        scripts: Vec<(String, Vec<u8>)>,
    ) -> Self {
        let scripts = scripts
            .into_iter()
            .map(|(url, body)| ScriptEntry { url, body })
            .collect();
        SiteSnapshot::new(
            url,
            url,
            DateTime::UNIX_EPOCH,
            FetchStatus::Http { code: 200 },
            html.into(),
            false,
            scripts,
        )
    }

    /// Capture of a site that could not be reached.
    pub fn failed(
        url: &str,
        fetched_at: DateTime<Utc>,
        kind: FailureKind,
        message: impl Into<String>,
    ) -> Self {
        SiteSnapshot::new(
            url,
            url,
            fetched_at,
            FetchStatus::TransportFailure {
                kind,
                message: message.into(),
            },
            Vec::new(),
            false,
            Vec::new(),
        )
    }

    /// Named sources in a fixed order: the page, then scripts in capture order.
    pub fn sources(&self) -> impl Iterator<Item = (&str, &[u8])> {
        std::iter::once(("page.html", self.html.as_slice())).chain(
            self.scripts
                .iter()
                .map(|s| (s.url.as_str(), s.body.as_slice())),
        )
    }
}

/// Hex SHA-256 over length-prefixed `url`, `html` and each script's
/// `(url, body)`.
pub fn snapshot_id(url: &str, html: &[u8], scripts: &[ScriptEntry]) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(url.as_bytes());
    field(html);
    field(&(scripts.len() as u64).to_le_bytes());
    for s in scripts {
        field(s.url.as_bytes());
        field(&s.body);
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn id_and_fingerprint_ignore_fetch_time() {
        let a = SiteSnapshot::from_content("https://a.xyz/", "<p>mint now</p>", vec![]);
        let mut b = a.clone();
        b.fetched_at = Utc.with_ymd_and_hms(2022, 7, 8, 0, 0, 0).unwrap();
        let b = SiteSnapshot::new(
            b.url,
            b.final_url,
            b.fetched_at,
            b.status,
            b.html,
            false,
            b.scripts,
        );
        assert_eq!(a.snapshot_id, b.snapshot_id);
        assert_eq!(a.content_fingerprint, b.content_fingerprint);
    }

    #[test]
    fn id_depends_on_url_and_scripts() {
        let a = SiteSnapshot::from_content("https://a.xyz/", "x", vec![]);
        let b = SiteSnapshot::from_content("https://b.xyz/", "x", vec![]);
        let c = SiteSnapshot::from_content(
            "https://a.xyz/",
            "x",
            vec![("https://a.xyz/s.js".into(), b"y".to_vec())],
        );
        assert_ne!(a.snapshot_id, b.snapshot_id);
        assert_ne!(a.snapshot_id, c.snapshot_id);
        // field framing: moving bytes between url and html changes the id
        let d = SiteSnapshot::from_content("https://a.xyz/x", "", vec![]);
        let e = SiteSnapshot::from_content("https://a.xyz/", "x", vec![]);
        assert_ne!(d.snapshot_id, e.snapshot_id);
    }

    #[test]
    fn failed_snapshot_is_empty() {
        let s = SiteSnapshot::failed(
            "https://gone.xyz/",
            DateTime::UNIX_EPOCH,
            FailureKind::Dns,
            "nxdomain",
        );
        assert!(s.html.is_empty());
        assert!(s.status.is_transport_failure());
        assert_eq!(s.content_fingerprint, NULL_FINGERPRINT);
    }
}
