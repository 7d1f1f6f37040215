//! The ten classifier inputs computed for each captured site, the account
//! and contract-name providers they depend on, and the feature-matrix CSV.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::CollectionRegistry;
use crate::siteanalysis::{self, LinkClass, SiteAnalysis};
use crate::snapshot::SiteSnapshot;

pub const FEATURE_COUNT: usize = 10;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "url_matches_known",
    "contract_matches_known",
    "eth_address_count",
    "has_twitter_link",
    "twitter_active",
    "twitter_is_known",
    "opensea_is_known",
    "twitter_followers",
    "twitter_age_days",
    "contract_name_resolvable",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("provider unavailable: {0}")]
    Provider(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Phishing,
    Benign,
}

impl Label {
    pub fn is_phishing(self) -> bool {
        self == Label::Phishing
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Phishing => "phishing",
            Label::Benign => "benign",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phishing" | "1" => Ok(Label::Phishing),
            "benign" | "0" => Ok(Label::Benign),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountInfo {
    pub handle: String,
    pub exists: bool,
    pub active: bool,
    pub followers: u64,
    pub created_at: Option<DateTime<Utc>>,
    pub fetched_at: DateTime<Utc>,
}

impl AccountInfo {
    pub fn missing(handle: &str, fetched_at: DateTime<Utc>) -> Self {
        AccountInfo {
            handle: handle.to_string(),
            exists: false,
            active: false,
            followers: 0,
            created_at: None,
            fetched_at,
        }
    }

    /// Account age in days at fetch time; 0 for accounts that do not exist.
    pub fn age_days(&self) -> f64 {
        match (self.exists, self.created_at) {
            (true, Some(c)) => {
                ((self.fetched_at - c).num_milliseconds() as f64 / 86_400_000.0).max(0.0)
            }
            _ => 0.0,
        }
    }
}

pub trait AccountProvider: Sync {
    fn lookup(&self, handle: &str) -> Result<AccountInfo, FeatureError>;
}

pub trait ContractNameProvider: Sync {
    fn name_of(&self, address: &str) -> Result<Option<String>, FeatureError>;
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        })
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Accounts from a `handle,exists,active,followers,created_at` CSV. Handles
/// absent from the file are reported as non-existent.
#[derive(Debug, Clone, Default)]
pub struct CsvAccountProvider {
    accounts: HashMap<String, AccountInfo>,
    fetched_at: DateTime<Utc>,
}

impl CsvAccountProvider {
    pub fn from_reader(r: impl Read, fetched_at: DateTime<Utc>) -> Result<Self, FeatureError> {
        #[derive(Deserialize)]
        struct Row {
            handle: String,
            exists: String,
            active: String,
            followers: String,
            created_at: String,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let mut accounts = HashMap::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let line = accounts.len() as u64 + 2;
            let bad = |reason: &str| FeatureError::Malformed {
                line,
                reason: reason.to_string(),
            };
            let handle = row
                .handle
                .trim()
                .trim_start_matches('@')
                .to_ascii_lowercase();
            let exists = parse_bool(&row.exists).ok_or_else(|| bad("exists must be 0/1"))?;
            let info = if exists {
                AccountInfo {
                    handle: handle.clone(),
                    exists,
                    active: parse_bool(&row.active).ok_or_else(|| bad("active must be 0/1"))?,
                    followers: row
                        .followers
                        .trim()
                        .parse()
                        .map_err(|_| bad("followers must be a count"))?,
                    created_at: Some(
                        parse_time(&row.created_at)
                            .ok_or_else(|| bad("created_at must be a date"))?,
                    ),
                    fetched_at,
                }
            } else {
                AccountInfo::missing(&handle, fetched_at)
            };
            accounts.insert(handle, info);
        }
        Ok(CsvAccountProvider {
            accounts,
            fetched_at,
        })
    }

    pub fn load(path: &Path, fetched_at: DateTime<Utc>) -> Result<Self, FeatureError> {
        Self::from_reader(std::fs::File::open(path)?, fetched_at)
    }
}

impl AccountProvider for CsvAccountProvider {
    fn lookup(&self, handle: &str) -> Result<AccountInfo, FeatureError> {
        let key = handle.trim_start_matches('@').to_ascii_lowercase();
        Ok(self
            .accounts
            .get(&key)
            .cloned()
            .unwrap_or_else(|| AccountInfo::missing(&key, self.fetched_at)))
    }
}

/// Contract names from a `contract_address,name` CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvNameProvider {
    names: HashMap<String, String>,
}

impl CsvNameProvider {
    pub fn from_reader(r: impl Read) -> Result<Self, FeatureError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut names = HashMap::new();
        for row in rdr.deserialize::<(String, String)>() {
            let (addr, name) = row?;
            if !name.trim().is_empty() {
                names.insert(addr.trim().to_ascii_lowercase(), name.trim().to_string());
            }
        }
        Ok(CsvNameProvider { names })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

impl ContractNameProvider for CsvNameProvider {
    fn name_of(&self, address: &str) -> Result<Option<String>, FeatureError> {
        Ok(self.names.get(&address.to_ascii_lowercase()).cloned())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Emit the account-activity feature as a constant `false`.
    #[serde(default)]
    pub disable_f5: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub url_matches_known: bool,
    pub contract_matches_known: bool,
    pub eth_address_count: u32,
    pub has_twitter_link: bool,
    pub twitter_active: bool,
    pub twitter_is_known: bool,
    pub opensea_is_known: bool,
    pub twitter_followers: u64,
    pub twitter_age_days: f64,
    pub contract_name_resolvable: bool,
    pub label: Option<Label>,
    /// Features computed from fallback values, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            b(self.url_matches_known),
            b(self.contract_matches_known),
            self.eth_address_count as f64,
            b(self.has_twitter_link),
            b(self.twitter_active),
            b(self.twitter_is_known),
            b(self.opensea_is_known),
            self.twitter_followers as f64,
            self.twitter_age_days,
            b(self.contract_name_resolvable),
        ]
    }

    pub fn from_array(v: &[f64; FEATURE_COUNT], label: Option<Label>) -> Self {
        FeatureVector {
            url_matches_known: v[0] != 0.0,
            contract_matches_known: v[1] != 0.0,
            eth_address_count: v[2] as u32,
            has_twitter_link: v[3] != 0.0,
            twitter_active: v[4] != 0.0,
            twitter_is_known: v[5] != 0.0,
            opensea_is_known: v[6] != 0.0,
            twitter_followers: v[7] as u64,
            twitter_age_days: v[8],
            contract_name_resolvable: v[9] != 0.0,
            label,
            notes: Vec::new(),
        }
    }
}

/// Computes the feature vector of one snapshot from its analysis.
pub fn extract_features(
    snapshot: &SiteSnapshot,
    analysis: &SiteAnalysis,
    registry: &CollectionRegistry,
    accounts: &dyn AccountProvider,
    names: &dyn ContractNameProvider,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let mut notes = Vec::new();
    let url_matches_known = matches!(registry.match_official(&snapshot.url), Ok(Some(_)));

    let mut contract_matches_known = false;
    let mut contract_name_resolvable = false;
    for ex in &analysis.addresses {
        let known = registry.contract(&ex.address.hex).is_some();
        contract_matches_known |= known;
        if known {
            contract_name_resolvable = true;
        } else if !contract_name_resolvable {
            match names.name_of(&ex.address.normalized()) {
                Ok(Some(_)) => contract_name_resolvable = true,
                Ok(None) => {}
                Err(e) => notes.push(format!(
                    "contract_name_resolvable: lookup of {} failed: {e}",
                    ex.address.hex
                )),
            }
        }
    }

    let links = &analysis.links;
    let real_twitter: Vec<_> = links
        .twitter_links
        .iter()
        .filter(|l| l.class != LinkClass::Empty)
        .collect();
    let has_twitter_link = !real_twitter.is_empty();
    let twitter_is_known = real_twitter.iter().any(|l| l.class == LinkClass::Official);
    let opensea_is_known = links
        .opensea_links
        .iter()
        .any(|l| l.class == LinkClass::Official);

    let account = real_twitter.iter().find_map(|l| siteanalysis::twitter_handle(&l.href)).map(|h| {
        accounts.lookup(&h).unwrap_or_else(|e| {
            notes.push(format!("twitter_active, twitter_followers, twitter_age_days: account lookup failed: {e}"));
            AccountInfo::missing(&h, snapshot.fetched_at)
        })
    });
    let (mut twitter_active, twitter_followers, twitter_age_days) = match &account {
        Some(a) if a.exists => (a.active, a.followers, a.age_days()),
        _ => (false, 0, 0.0),
    };
    if cfg.disable_f5 {
        twitter_active = false;
    }

    FeatureVector {
        url_matches_known,
        contract_matches_known,
        eth_address_count: analysis.addresses.len() as u32,
        has_twitter_link,
        twitter_active,
        twitter_is_known,
        opensea_is_known,
        twitter_followers,
        twitter_age_days,
        contract_name_resolvable,
        label: None,
        notes,
    }
}

/// One row of the feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub snapshot_id: String,
    pub features: FeatureVector,
}

const HEADER: [&str; 12] = [
    "snapshot_id",
    "f1",
    "f2",
    "f3",
    "f4",
    "f5",
    "f6",
    "f7",
    "f8",
    "f9",
    "f10",
    "label",
];

pub fn write_matrix(w: impl Write, rows: &[MatrixRow]) -> Result<(), FeatureError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    for r in rows {
        let f = &r.features;
        let bit = |x: bool| if x { "1" } else { "0" }.to_string();
        wtr.write_record([
            r.snapshot_id.clone(),
            bit(f.url_matches_known),
            bit(f.contract_matches_known),
            f.eth_address_count.to_string(),
            bit(f.has_twitter_link),
            bit(f.twitter_active),
            bit(f.twitter_is_known),
            bit(f.opensea_is_known),
            f.twitter_followers.to_string(),
            f.twitter_age_days.to_string(),
            bit(f.contract_name_resolvable),
            f.label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix(r: impl Read) -> Result<Vec<MatrixRow>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != HEADER {
        return Err(FeatureError::Malformed {
            line: 1,
            reason: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| FeatureError::Malformed { line, reason };
        let mut vals = [0.0; FEATURE_COUNT];
        for (i, v) in vals.iter_mut().enumerate() {
            let raw = rec.get(i + 1).unwrap_or_default().trim();
            *v = raw
                .parse::<f64>()
                .map_err(|_| bad(format!("f{} is not a number: {raw:?}", i + 1)))?;
            if !v.is_finite() || *v < 0.0 {
                return Err(bad(format!(
                    "f{} must be a finite non-negative number",
                    i + 1
                )));
            }
        }
        let label_raw = rec.get(11).unwrap_or_default().trim();
        let label = if label_raw.is_empty() {
            None
        } else {
            Some(label_raw.parse::<Label>().map_err(bad)?)
        };
        out.push(MatrixRow {
            snapshot_id: rec.get(0).unwrap_or_default().to_string(),
            features: FeatureVector::from_array(&vals, label),
        });
    }
    Ok(out)
}

pub fn load_matrix(path: &Path) -> Result<Vec<MatrixRow>, FeatureError> {
    read_matrix(std::fs::File::open(path)?)
}
