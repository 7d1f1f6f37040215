//! Known NFT collections: the reference list used to seed squatting
//! candidates, decide whether a URL or contract is official, and audit the
//! social links a page advertises.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::psl;
use crate::siteanalysis::address;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: duplicate slug {slug:?}")]
    DuplicateSlug { line: u64, slug: String },
    #[error("line {line}: duplicate sales rank {rank}")]
    DuplicateRank { line: u64, rank: u32 },
    #[error("unparseable URL {0:?}")]
    InvalidUrl(String),
    #[error("malformed chain address {0:?}")]
    MalformedAddress(String),
}

/// One known collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRecord {
    pub slug: String,
    pub name: String,
    pub official_domain: String,
    pub contract_address: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub twitter_handle: Option<String>,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub opensea_slug: Option<String>,
    pub sales_rank: u32,
}

fn empty_as_none<'de, D>(d: D) -> Result<Option<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
}

impl CollectionRecord {
    fn normalize(mut self, line: u64) -> Result<Self, RegistryError> {
        let bad = |reason: String| RegistryError::Malformed { line, reason };
        self.slug = self.slug.trim().to_ascii_lowercase();
        if self.slug.is_empty() {
            return Err(bad("empty slug".into()));
        }
        self.official_domain = self
            .official_domain
            .trim()
            .trim_end_matches('.')
            .to_ascii_lowercase();
        if self.official_domain.is_empty() {
            return Err(bad("empty official_domain".into()));
        }
        if self.official_domain.contains("://") || self.official_domain.contains('/') {
            return Err(bad(format!(
                "official_domain {:?} must be a bare domain",
                self.official_domain
            )));
        }
        self.contract_address = self.contract_address.trim().to_string();
        if !address::is_well_formed(&self.contract_address) {
            return Err(bad(format!(
                "contract_address {:?} is not 0x + 40 hex digits",
                self.contract_address
            )));
        }
        if let Some(h) = self.twitter_handle.take() {
            self.twitter_handle = Some(h.trim_start_matches('@').to_string());
        }
        if self.sales_rank == 0 {
            return Err(bad("sales_rank must be >= 1".into()));
        }
        Ok(self)
    }
}

/// Immutable, indexed collection list.
#[derive(Debug, Clone, Default)]
pub struct CollectionRegistry {
    records: Vec<CollectionRecord>,
    by_domain: HashMap<String, usize>,
    by_contract: HashMap<String, usize>,
    by_handle: HashMap<String, usize>,
    by_slug: HashMap<String, usize>,
}

impl PartialEq for CollectionRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl CollectionRegistry {
    /// Builds a registry from already-parsed records, enforcing slug and
    /// rank uniqueness. Line numbers in errors are 1-based record indexes
    /// plus the header line.
    pub fn from_records(records: Vec<CollectionRecord>) -> Result<Self, RegistryError> {
        let mut reg = CollectionRegistry::default();
        let mut ranks = HashMap::new();
        for (i, rec) in records.into_iter().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.normalize(line)?;
            if reg.by_slug.contains_key(&rec.slug) {
                return Err(RegistryError::DuplicateSlug {
                    line,
                    slug: rec.slug,
                });
            }
            if ranks.insert(rec.sales_rank, ()).is_some() {
                return Err(RegistryError::DuplicateRank {
                    line,
                    rank: rec.sales_rank,
                });
            }
            reg.push(rec);
        }
        Ok(reg)
    }

    fn push(&mut self, rec: CollectionRecord) {
        let idx = self.records.len();
        self.by_slug.insert(rec.slug.clone(), idx);
        let domain_key = psl::registrable_domain(&rec.official_domain)
            .unwrap_or_else(|| rec.official_domain.clone());
        self.by_domain.entry(domain_key).or_insert(idx);
        self.by_contract
            .entry(rec.contract_address.to_ascii_lowercase())
            .or_insert(idx);
        if let Some(h) = &rec.twitter_handle {
            self.by_handle.entry(h.to_ascii_lowercase()).or_insert(idx);
        }
        self.records.push(rec);
    }

    pub fn records(&self) -> &[CollectionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn by_slug(&self, slug: &str) -> Option<&CollectionRecord> {
        self.by_slug
            .get(&slug.to_ascii_lowercase())
            .map(|&i| &self.records[i])
    }

    pub fn by_twitter_handle(&self, handle: &str) -> Option<&CollectionRecord> {
        let key = handle.trim_start_matches('@').to_ascii_lowercase();
        self.by_handle.get(&key).map(|&i| &self.records[i])
    }

    /// Records ordered by ascending sales rank, truncated to `n`.
    pub fn top_by_rank(&self, n: usize) -> Vec<&CollectionRecord> {
        let mut v: Vec<&CollectionRecord> = self.records.iter().collect();
        v.sort_by_key(|r| r.sales_rank);
        v.truncate(n);
        v
    }

    /// Exact, case-insensitive comparison of the URL's registrable domain
    /// against each record's official domain. No fuzzy matching.
    pub fn match_official(&self, url: &str) -> Result<Option<&CollectionRecord>, RegistryError> {
        let host = url_host(url)?;
        let key = psl::registrable_domain(&host).unwrap_or(host);
        Ok(self.by_domain.get(&key).map(|&i| &self.records[i]))
    }

    /// Case-insensitive contract lookup.
    pub fn match_contract(&self, addr: &str) -> Result<Option<&CollectionRecord>, RegistryError> {
        if !address::is_well_formed(addr) {
            return Err(RegistryError::MalformedAddress(addr.to_string()));
        }
        Ok(self
            .by_contract
            .get(&addr.to_ascii_lowercase())
            .map(|&i| &self.records[i]))
    }

    /// Lookup for an address already known to be well formed.
    pub fn contract(&self, addr: &str) -> Option<&CollectionRecord> {
        self.by_contract
            .get(&addr.to_ascii_lowercase())
            .map(|&i| &self.records[i])
    }
}

/// Lowercase host of a URL. Bare hosts (`example.com/path`) are accepted
/// by assuming an `http` scheme.
pub fn url_host(url: &str) -> Result<String, RegistryError> {
    let trimmed = url.trim();
    let parsed = match Url::parse(trimmed) {
        Ok(u) => u,
        Err(url::ParseError::RelativeUrlWithoutBase) => Url::parse(&format!("http://{trimmed}"))
            .map_err(|_| RegistryError::InvalidUrl(url.to_string()))?,
        Err(_) => return Err(RegistryError::InvalidUrl(url.to_string())),
    };
    parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .map(|h| h.trim_end_matches('.').to_ascii_lowercase())
        .ok_or_else(|| RegistryError::InvalidUrl(url.to_string()))
}

/// Loads a registry CSV with header
/// `slug,name,official_domain,contract_address,twitter_handle,opensea_slug,sales_rank`.
pub fn load_registry(path: impl AsRef<Path>) -> Result<CollectionRegistry, RegistryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_registry(&text)
}

pub fn parse_registry(text: &str) -> Result<CollectionRegistry, RegistryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| RegistryError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let mut reg = CollectionRegistry::default();
    let mut ranks = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| RegistryError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let rec: CollectionRecord =
            row.deserialize(Some(&headers))
                .map_err(|e| RegistryError::Malformed {
                    line,
                    reason: e.to_string(),
                })?;
        let rec = rec.normalize(line)?;
        if reg.by_slug.contains_key(&rec.slug) {
            return Err(RegistryError::DuplicateSlug {
                line,
                slug: rec.slug,
            });
        }
        if ranks.insert(rec.sales_rank, ()).is_some() {
            return Err(RegistryError::DuplicateRank {
                line,
                rank: rec.sales_rank,
            });
        }
        reg.push(rec);
    }
    Ok(reg)
}
