//! Financial impact of attacker wallets from block-explorer transaction
//! exports.
//!
//! Amounts stay in integer wei (`BigUint`, capped at 256 bits) through every
//! sum. USD values appear only at the last step, where each day's wei total
//! is multiplied by that UTC day's closing price.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::siteanalysis::address::is_well_formed;
use crate::stats::{iqr_fences, Descriptive};

const WEI_PER_ETH: f64 = 1e18;
const MAX_VALUE_BITS: u64 = 256;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: duplicate transaction hash {hash}")]
    DuplicateHash { hash: String, line: u64 },
    #[error("line {line}: value does not fit in 256 bits")]
    ValueOverflow { line: u64 },
    #[error("no USD price for {0}")]
    MissingPrice(NaiveDate),
    #[error("category {0:?} has no wallets")]
    EmptyCategory(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ChainError + '_ {
    move |source| ChainError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn serialize_wei<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainTransaction {
    /// Lowercase `0x`-prefixed 32-byte hash.
    pub hash: String,
    /// Lowercase address.
    pub from: String,
    /// Lowercase address.
    pub to: String,
    #[serde(serialize_with = "serialize_wei")]
    pub value_wei: BigUint,
    pub timestamp: i64,
    pub method: Option<String>,
    pub is_error: bool,
}

impl ChainTransaction {
    pub fn utc_day(&self) -> Option<NaiveDate> {
        DateTime::<Utc>::from_timestamp(self.timestamp, 0).map(|t| t.date_naive())
    }

    fn is_mint_call(&self) -> bool {
        self.method
            .as_deref()
            .is_some_and(|m| m.to_ascii_lowercase().contains("mint"))
    }
}

#[derive(Debug, Deserialize)]
struct TxRow {
    hash: String,
    from: String,
    to: String,
    value_wei: String,
    timestamp: String,
    #[serde(default)]
    method: Option<String>,
    is_error: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" | "" => Some(false),
        _ => None,
    }
}

fn parse_hash(s: &str) -> Option<String> {
    let s = s.trim();
    let body = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    (body.len() == 64 && body.bytes().all(|b| b.is_ascii_hexdigit()))
        .then(|| format!("0x{}", body.to_ascii_lowercase()))
}

/// Parses a decimal wei amount, rejecting anything above 2^256 - 1.
pub fn parse_wei(s: &str) -> Result<BigUint, WeiError> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(WeiError::NotDecimal);
    }
    let v: BigUint = s.parse().map_err(|_| WeiError::NotDecimal)?;
    if v.bits() > MAX_VALUE_BITS {
        return Err(WeiError::Overflow);
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeiError {
    NotDecimal,
    Overflow,
}

/// Reads a transaction export with header
/// `hash,from,to,value_wei,timestamp,method,is_error`.
pub fn parse_transactions(reader: impl Read) -> Result<Vec<ChainTransaction>, ChainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.deserialize::<TxRow>() {
        let row = rec?;
        // header is line 1
        let line = out.len() as u64 + 2;
        let bad = |reason: String| ChainError::Malformed { line, reason };
        let hash = parse_hash(&row.hash)
            .ok_or_else(|| bad(format!("bad transaction hash {:?}", row.hash)))?;
        for (name, a) in [("from", &row.from), ("to", &row.to)] {
            if !is_well_formed(a) {
                return Err(bad(format!("bad {name} address {a:?}")));
            }
        }
        let value_wei = parse_wei(&row.value_wei).map_err(|e| match e {
            WeiError::Overflow => ChainError::ValueOverflow { line },
            WeiError::NotDecimal => bad(format!("bad value {:?}", row.value_wei)),
        })?;
        let timestamp: i64 = row
            .timestamp
            .parse()
            .map_err(|_| bad(format!("bad timestamp {:?}", row.timestamp)))?;
        if DateTime::<Utc>::from_timestamp(timestamp, 0).is_none() {
            return Err(bad(format!("timestamp {timestamp} out of range")));
        }
        let is_error = parse_bool(&row.is_error)
            .ok_or_else(|| bad(format!("bad is_error {:?}", row.is_error)))?;
        if !seen.insert(hash.clone()) {
            return Err(ChainError::DuplicateHash { hash, line });
        }
        out.push(ChainTransaction {
            hash,
            from: row.from.to_ascii_lowercase(),
            to: row.to.to_ascii_lowercase(),
            value_wei,
            timestamp,
            method: row.method.filter(|m| !m.is_empty()),
            is_error,
        });
    }
    Ok(out)
}

pub fn load_transactions(path: &Path) -> Result<Vec<ChainTransaction>, ChainError> {
    parse_transactions(std::fs::File::open(path).map_err(io_err(path))?)
}

/// One address per line; blank lines and `#` comments are skipped.
pub fn read_wallet_list(reader: impl BufRead) -> Result<Vec<String>, ChainError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| ChainError::Io {
            path: "<wallets>".into(),
            source,
        })?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !is_well_formed(t) {
            return Err(ChainError::Malformed {
                line: i as u64 + 1,
                reason: format!("bad wallet address {t:?}"),
            });
        }
        out.push(t.to_ascii_lowercase());
    }
    Ok(out)
}

/// Daily closing USD price of the native currency.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceTable {
    daily: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: NaiveDate,
    usd: f64,
}

impl PriceTable {
    pub fn from_daily(daily: BTreeMap<NaiveDate, f64>) -> Self {
        PriceTable { daily }
    }

    /// Reads a `date,usd` CSV.
    pub fn from_reader(reader: impl Read) -> Result<Self, ChainError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut daily = BTreeMap::new();
        for (i, rec) in rdr.deserialize::<PriceRow>().enumerate() {
            let row = rec?;
            let line = i as u64 + 2;
            if !(row.usd.is_finite() && row.usd >= 0.0) {
                return Err(ChainError::Malformed {
                    line,
                    reason: format!("bad price {}", row.usd),
                });
            }
            if daily.insert(row.date, row.usd).is_some() {
                return Err(ChainError::Malformed {
                    line,
                    reason: format!("duplicate date {}", row.date),
                });
            }
        }
        Ok(PriceTable { daily })
    }

    pub fn load(path: &Path) -> Result<Self, ChainError> {
        Self::from_reader(std::fs::File::open(path).map_err(io_err(path))?)
    }

    pub fn price_on(&self, day: NaiveDate) -> Result<f64, ChainError> {
        self.daily
            .get(&day)
            .copied()
            .ok_or(ChainError::MissingPrice(day))
    }
}

/// Inclusive time bounds in epoch seconds; `None` leaves a side open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: Option<i64>,
    pub to: Option<i64>,
}

impl Window {
    pub fn all() -> Self {
        Window::default()
    }

    pub fn contains(&self, t: i64) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t <= e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalletSummary {
    pub wallet: String,
    pub inbound_tx_count: u64,
    #[serde(serialize_with = "serialize_wei")]
    pub inbound_total_wei: BigUint,
    pub inbound_total_usd: f64,
    pub zero_value_tx_count: u64,
    pub mint_intent_count: u64,
    pub window: Window,
}

fn is_inbound(tx: &ChainTransaction, wallet: &str, window: &Window) -> bool {
    !tx.is_error && tx.to == wallet && window.contains(tx.timestamp)
}

/// Totals for successful transactions sent to `wallet` inside `window`.
///
/// Wei is summed per UTC day and each day is converted once at that day's
/// price, so the result does not depend on transaction order.
pub fn wallet_summary(
    txs: &[ChainTransaction],
    wallet: &str,
    prices: &PriceTable,
    window: Window,
) -> Result<WalletSummary, ChainError> {
    let wallet = wallet.to_ascii_lowercase();
    let mut per_day: BTreeMap<NaiveDate, BigUint> = BTreeMap::new();
    let mut s = WalletSummary {
        wallet: wallet.clone(),
        inbound_tx_count: 0,
        inbound_total_wei: BigUint::ZERO,
        inbound_total_usd: 0.0,
        zero_value_tx_count: 0,
        mint_intent_count: 0,
        window,
    };
    for tx in txs.iter().filter(|tx| is_inbound(tx, &wallet, &window)) {
        s.inbound_tx_count += 1;
        if tx.value_wei == BigUint::ZERO {
            s.zero_value_tx_count += 1;
            if tx.is_mint_call() {
                s.mint_intent_count += 1;
            }
            continue;
        }
        let day = tx.utc_day().expect("validated on parse");
        *per_day.entry(day).or_default() += &tx.value_wei;
    }
    for (day, wei) in per_day {
        let price = prices.price_on(day)?;
        s.inbound_total_usd += wei_to_eth(&wei) * price;
        s.inbound_total_wei += wei;
    }
    Ok(s)
}

/// Summaries for every wallet, in the order given.
pub fn summarize_wallets(
    txs: &[ChainTransaction],
    wallets: &[String],
    prices: &PriceTable,
    window: Window,
) -> Result<Vec<WalletSummary>, ChainError> {
    wallets
        .par_iter()
        .map(|w| wallet_summary(txs, w, prices, window))
        .collect()
}

/// Inbound wei over the whole ledger for any of `wallets`, computed in one
/// pass without grouping.
pub fn ledger_inbound_wei(txs: &[ChainTransaction], wallets: &[String], window: Window) -> BigUint {
    let set: BTreeSet<String> = wallets.iter().map(|w| w.to_ascii_lowercase()).collect();
    txs.iter()
        .filter(|tx| !tx.is_error && window.contains(tx.timestamp) && set.contains(&tx.to))
        .map(|tx| &tx.value_wei)
        .sum()
}

pub fn wei_to_eth(wei: &BigUint) -> f64 {
    // decimal text parses to the correctly rounded f64
    wei.to_string().parse::<f64>().expect("decimal digits") / WEI_PER_ETH
}

/// Reads a `wallet,category` CSV into a wallet → category map.
pub fn read_categories(reader: impl Read) -> Result<BTreeMap<String, String>, ChainError> {
    #[derive(Deserialize)]
    struct Row {
        wallet: String,
        category: String,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec?;
        if !is_well_formed(&row.wallet) {
            return Err(ChainError::Malformed {
                line: i as u64 + 2,
                reason: format!("bad wallet {:?}", row.wallet),
            });
        }
        out.insert(row.wallet.to_ascii_lowercase(), row.category);
    }
    Ok(out)
}

/// Tukey outlier exclusion on funds, applied only to the listed categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRule {
    pub categories: Vec<String>,
    pub k: f64,
}

impl OutlierRule {
    pub fn iqr(categories: &[&str]) -> Self {
        OutlierRule {
            categories: categories.iter().map(|c| c.to_string()).collect(),
            k: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedWallet {
    pub wallet: String,
    pub funds_usd: f64,
}

/// One row of the descriptive table: funds and transaction counts for the
/// wallets of one category. Excluded outliers are left out of both blocks
/// and listed separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub category: String,
    pub wallets: usize,
    pub funds_usd: Descriptive,
    pub tx_counts: Descriptive,
    pub excluded: Vec<ExcludedWallet>,
}

/// Wallets whose funds fall outside `[Q1 - k·IQR, Q3 + k·IQR]`.
pub fn iqr_outliers(funds: &[f64], k: f64) -> Vec<usize> {
    let Some((lo, hi)) = iqr_fences(funds, k) else {
        return Vec::new();
    };
    funds
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < lo || v > hi)
        .map(|(i, _)| i)
        .collect()
}

pub fn category_stats(
    groups: &BTreeMap<String, Vec<WalletSummary>>,
    outliers: Option<&OutlierRule>,
) -> Result<Vec<CategoryStats>, ChainError> {
    let mut out = Vec::with_capacity(groups.len());
    for (category, summaries) in groups {
        if summaries.is_empty() {
            return Err(ChainError::EmptyCategory(category.clone()));
        }
        let funds: Vec<f64> = summaries.iter().map(|s| s.inbound_total_usd).collect();
        let drop: BTreeSet<usize> = match outliers {
            Some(rule) if rule.categories.iter().any(|c| c == category) => {
                iqr_outliers(&funds, rule.k).into_iter().collect()
            }
            _ => BTreeSet::new(),
        };
        let kept: Vec<&WalletSummary> = summaries
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, s)| s)
            .collect();
        let kept_funds: Vec<f64> = kept.iter().map(|s| s.inbound_total_usd).collect();
        let kept_counts: Vec<f64> = kept.iter().map(|s| s.inbound_tx_count as f64).collect();
        out.push(CategoryStats {
            category: category.clone(),
            wallets: kept.len(),
            funds_usd: Descriptive::of(&kept_funds)
                .ok_or_else(|| ChainError::EmptyCategory(category.clone()))?,
            tx_counts: Descriptive::of(&kept_counts)
                .ok_or_else(|| ChainError::EmptyCategory(category.clone()))?,
            excluded: drop
                .iter()
                .map(|&i| ExcludedWallet {
                    wallet: summaries[i].wallet.clone(),
                    funds_usd: summaries[i].inbound_total_usd,
                })
                .collect(),
        });
    }
    Ok(out)
}

/// Groups summaries by category. Wallets without a category are returned
/// separately.
pub fn group_by_category(
    summaries: Vec<WalletSummary>,
    categories: &BTreeMap<String, String>,
) -> (BTreeMap<String, Vec<WalletSummary>>, Vec<String>) {
    let mut groups: BTreeMap<String, Vec<WalletSummary>> = BTreeMap::new();
    let mut uncategorized = Vec::new();
    for s in summaries {
        match categories.get(&s.wallet) {
            Some(c) => groups.entry(c.clone()).or_default().push(s),
            None => uncategorized.push(s.wallet),
        }
    }
    (groups, uncategorized)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub window: Window,
    pub wallets: Vec<WalletSummary>,
    pub categories: Vec<CategoryStats>,
    pub uncategorized: Vec<String>,
    #[serde(serialize_with = "serialize_wei")]
    pub total_inbound_wei: BigUint,
    pub total_inbound_usd: f64,
}

pub fn chain_report(
    txs: &[ChainTransaction],
    wallets: &[String],
    prices: &PriceTable,
    categories: &BTreeMap<String, String>,
    window: Window,
    outliers: Option<&OutlierRule>,
) -> Result<ChainReport, ChainError> {
    let summaries = summarize_wallets(txs, wallets, prices, window)?;
    let total_inbound_wei = summaries.iter().map(|s| &s.inbound_total_wei).sum();
    let total_inbound_usd = summaries.iter().map(|s| s.inbound_total_usd).sum();
    let (groups, uncategorized) = group_by_category(summaries.clone(), categories);
    Ok(ChainReport {
        window,
        wallets: summaries,
        categories: category_stats(&groups, outliers)?,
        uncategorized,
        total_inbound_wei,
        total_inbound_usd,
    })
}
