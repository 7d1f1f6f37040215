//! Longitudinal monitoring of candidate sites: blocklist listing,
//! detection counts and liveness, polled on a fixed grid, plus the reports
//! computed from the resulting event log.

mod monitor;
mod providers;
mod report;

use std::io::{BufRead, Write};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use monitor::{run_monitor, Clock, MonitorPlan, VirtualClock, WallClock};
pub use providers::{
    load_fixture_dir, load_fixture_file, LiveLiveness, Provider, ProviderKind, ScriptedProvider,
};
pub use report::{
    coverage_stats, coverage_timeseries, detection_histogram, format_hhmm, takedown_stats,
    write_coverage_csv, CoveragePoint, CoverageReport, TakedownReport, TargetTakedown,
};

/// Similarity to the first good capture below which a poll counts as the
/// site having changed.
pub const CHANGE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SentinelError {
    #[error("no targets in cohort {0}")]
    EmptyCohort(Cohort),
    #[error("interval must be positive and no longer than the horizon")]
    InvalidSchedule,
    #[error("invalid duration {0:?}; use e.g. 10m, 168h, 7d")]
    InvalidDuration(String),
    #[error("fixture {path}: {reason}")]
    Fixture { path: String, reason: String },
    #[error("event log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Nft,
    Regular,
}

impl std::fmt::Display for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cohort::Nft => "nft",
            Cohort::Regular => "regular",
        })
    }
}

impl std::str::FromStr for Cohort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nft" => Ok(Cohort::Nft),
            "regular" => Ok(Cohort::Regular),
            other => Err(format!("unknown cohort {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorTarget {
    pub url: String,
    pub first_seen: DateTime<Utc>,
    #[serde(default = "default_cohort")]
    pub cohort: Cohort,
}

fn default_cohort() -> Cohort {
    Cohort::Nft
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListingOutcome {
    Listed,
    Unlisted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liveness {
    Active,
    /// Unreachable, or content no longer resembles the first capture.
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Listing { outcome: ListingOutcome },
    DetectionCount { count: u32 },
    Liveness { state: Liveness },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollSample {
    pub target: String,
    pub provider: String,
    pub polled_at: DateTime<Utc>,
    #[serde(flatten)]
    pub observation: Observation,
}

/// Append-only sequence of poll samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    samples: Vec<PollSample>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, s: PollSample) {
        self.samples.push(s);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples in insertion order.
    pub fn samples(&self) -> &[PollSample] {
        &self.samples
    }

    /// Samples ordered by `(polled_at, provider, target)`.
    pub fn ordered(&self) -> Vec<&PollSample> {
        let mut v: Vec<&PollSample> = self.samples.iter().collect();
        v.sort_by(|a, b| {
            (a.polled_at, &a.provider, &a.target).cmp(&(b.polled_at, &b.provider, &b.target))
        });
        v
    }

    /// Samples for one `(target, provider)` pair in time order.
    pub fn series<'a>(&'a self, target: &'a str, provider: &'a str) -> Vec<&'a PollSample> {
        let mut v: Vec<&PollSample> = self
            .samples
            .iter()
            .filter(|s| s.target == target && s.provider == provider)
            .collect();
        v.sort_by_key(|s| s.polled_at);
        v
    }

    pub fn providers(&self) -> Vec<String> {
        let mut p: Vec<String> = self.samples.iter().map(|s| s.provider.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn write_ndjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for s in self.ordered() {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson(r: impl BufRead) -> Result<Self, SentinelError> {
        let mut log = EventLog::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s = serde_json::from_str(&line).map_err(|e| SentinelError::Log {
                line: i + 1,
                reason: e.to_string(),
            })?;
            log.append(s);
        }
        Ok(log)
    }
}

pub fn read_targets(r: impl BufRead) -> Result<Vec<MonitorTarget>, SentinelError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SentinelError::Log {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Parses `<n><unit>` with unit `s`, `m`, `h` or `d`.
pub fn parse_duration(s: &str) -> Result<Duration, SentinelError> {
    let t = s.trim();
    let bad = || SentinelError::InvalidDuration(s.to_string());
    let split = t.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
    let n: i64 = t[..split].parse().map_err(|_| bad())?;
    let d = match &t[split..] {
        "s" => Duration::try_seconds(n),
        "m" => Duration::try_minutes(n),
        "h" => Duration::try_hours(n),
        "d" => Duration::try_days(n),
        _ => None,
    }
    .ok_or_else(bad)?;
    if d <= Duration::zero() {
        return Err(bad());
    }
    Ok(d)
}
