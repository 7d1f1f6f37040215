//! Poll providers: scripted fixtures for simulation and a live liveness
//! checker built on the snapshot fetcher.
//!
//! A fixture CSV has the header `url,provider,<column>` where the third
//! column names the provider kind:
//!
//! * `listed_after_minutes`: minutes after first sighting at which the URL
//!   becomes listed; empty means never.
//! * `count_series`: `minute:count` steps separated by `;`, e.g. `0:0;60:2`.
//! * `inactive_after_minutes`: minutes after which the site is dead; empty
//!   means never.
//!
//! The cell value `error` makes every poll of that URL fail.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};

use super::{
    ListingOutcome, Liveness, MonitorTarget, Observation, SentinelError, CHANGE_THRESHOLD,
};
use crate::snapshot::{fetch_snapshot, jaccard, token_set, FetchLimits, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProviderKind {
    Blocklist,
    DetectionCount,
    Liveness,
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn kind(&self) -> ProviderKind;
    fn poll(&self, target: &MonitorTarget, at: DateTime<Utc>) -> Observation;
}

#[derive(Debug, Clone, PartialEq)]
enum Script {
    Error,
    /// Seconds after first sighting; `None` never fires.
    After(Option<i64>),
    /// `(seconds, count)` steps in ascending time.
    Counts(Vec<(i64, u32)>),
}

/// Provider whose answers come from a fixture table.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    id: String,
    kind: ProviderKind,
    scripts: HashMap<String, Script>,
}

fn minutes_to_secs(s: &str) -> Option<i64> {
    let m: f64 = s.trim().parse().ok()?;
    (m.is_finite() && m >= 0.0).then(|| (m * 60.0).round() as i64)
}

impl ScriptedProvider {
    pub fn new(id: impl Into<String>, kind: ProviderKind) -> Self {
        ScriptedProvider {
            id: id.into(),
            kind,
            scripts: HashMap::new(),
        }
    }

    fn parse_cell(kind: ProviderKind, cell: &str) -> Result<Script, String> {
        let cell = cell.trim();
        if cell.eq_ignore_ascii_case("error") {
            return Ok(Script::Error);
        }
        match kind {
            ProviderKind::Blocklist | ProviderKind::Liveness => {
                if cell.is_empty() {
                    Ok(Script::After(None))
                } else {
                    minutes_to_secs(cell)
                        .map(|s| Script::After(Some(s)))
                        .ok_or(format!("bad minutes {cell:?}"))
                }
            }
            ProviderKind::DetectionCount => {
                let mut steps = Vec::new();
                for part in cell.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                    let (m, c) = part.split_once(':').ok_or(format!("bad step {part:?}"))?;
                    let secs = minutes_to_secs(m).ok_or(format!("bad step {part:?}"))?;
                    let count = c.trim().parse().map_err(|_| format!("bad step {part:?}"))?;
                    steps.push((secs, count));
                }
                steps.sort_by_key(|s| s.0);
                Ok(Script::Counts(steps))
            }
        }
    }

    /// Adds or replaces the script for one URL using the fixture cell syntax.
    pub fn script(&mut self, url: &str, cell: &str) -> Result<(), SentinelError> {
        let s = Self::parse_cell(self.kind, cell).map_err(|reason| SentinelError::Fixture {
            path: self.id.clone(),
            reason,
        })?;
        self.scripts.insert(url.to_string(), s);
        Ok(())
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        self.kind
    }

    fn poll(&self, target: &MonitorTarget, at: DateTime<Utc>) -> Observation {
        let elapsed = (at - target.first_seen).num_seconds();
        let script = self.scripts.get(&target.url);
        match (self.kind, script) {
            (_, Some(Script::Error)) => Observation::Error {
                message: format!("{} scripted failure", self.id),
            },
            (ProviderKind::Blocklist, s) => {
                let listed = matches!(s, Some(Script::After(Some(t))) if elapsed >= *t);
                let outcome = if listed {
                    ListingOutcome::Listed
                } else {
                    ListingOutcome::Unlisted
                };
                Observation::Listing { outcome }
            }
            (ProviderKind::Liveness, s) => {
                let dead = matches!(s, Some(Script::After(Some(t))) if elapsed >= *t);
                Observation::Liveness {
                    state: if dead {
                        Liveness::Inactive
                    } else {
                        Liveness::Active
                    },
                }
            }
            (ProviderKind::DetectionCount, s) => {
                let count = match s {
                    Some(Script::Counts(steps)) => steps
                        .iter()
                        .take_while(|(t, _)| *t <= elapsed)
                        .last()
                        .map(|(_, c)| *c)
                        .unwrap_or(0),
                    _ => 0,
                };
                Observation::DetectionCount { count }
            }
        }
    }
}

/// Reads one fixture CSV; a file may script several providers of the same
/// kind.
pub fn load_fixture_file(path: &Path) -> Result<Vec<ScriptedProvider>, SentinelError> {
    let fixture_err = |reason: String| SentinelError::Fixture {
        path: path.display().to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| fixture_err(e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| fixture_err(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() != 3 || cols[0] != "url" || cols[1] != "provider" {
        return Err(fixture_err("header must be url,provider,<kind>".into()));
    }
    let kind = match cols[2] {
        "listed_after_minutes" => ProviderKind::Blocklist,
        "count_series" => ProviderKind::DetectionCount,
        "inactive_after_minutes" => ProviderKind::Liveness,
        other => return Err(fixture_err(format!("unknown provider column {other:?}"))),
    };
    let mut by_id: Vec<ScriptedProvider> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| fixture_err(e.to_string()))?;
        let (url, id, cell) = (
            rec.get(0).unwrap_or("").trim(),
            rec.get(1).unwrap_or("").trim(),
            rec.get(2).unwrap_or(""),
        );
        if url.is_empty() || id.is_empty() {
            return Err(fixture_err("empty url or provider".into()));
        }
        let idx = match by_id.iter().position(|p| p.id == id) {
            Some(i) => i,
            None => {
                by_id.push(ScriptedProvider::new(id, kind));
                by_id.len() - 1
            }
        };
        let script = ScriptedProvider::parse_cell(kind, cell).map_err(fixture_err)?;
        by_id[idx].scripts.insert(url.to_string(), script);
    }
    Ok(by_id)
}

/// All `*.csv` fixtures in a directory, in file-name order.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<ScriptedProvider>, SentinelError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(load_fixture_file(&f)?);
    }
    Ok(out)
}

/// Fetches the site and compares its token set with the first successful
/// capture. Failed or non-2xx fetches and captures below the change
/// threshold report inactive.
pub struct LiveLiveness {
    id: String,
    transport: Box<dyn Transport + Send>,
    limits: FetchLimits,
    baselines: Mutex<HashMap<String, HashSet<String>>>,
}

impl LiveLiveness {
    pub fn new(
        id: impl Into<String>,
        transport: Box<dyn Transport + Send>,
        limits: FetchLimits,
    ) -> Self {
        LiveLiveness {
            id: id.into(),
            transport,
            limits,
            baselines: Mutex::new(HashMap::new()),
        }
    }
}

impl Provider for LiveLiveness {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Liveness
    }

    fn poll(&self, target: &MonitorTarget, at: DateTime<Utc>) -> Observation {
        let snap = match fetch_snapshot(&target.url, &self.limits, self.transport.as_ref(), at) {
            Ok(s) => s,
            Err(e) => {
                return Observation::Error {
                    message: e.to_string(),
                }
            }
        };
        if !snap.status.is_success() {
            return Observation::Liveness {
                state: Liveness::Inactive,
            };
        }
        let tokens = token_set(&snap);
        let mut baselines = self.baselines.lock().expect("baseline lock");
        let base = baselines
            .entry(target.url.clone())
            .or_insert_with(|| tokens.clone());
        let state = if jaccard(base, &tokens) < CHANGE_THRESHOLD {
            Liveness::Inactive
        } else {
            Liveness::Active
        };
        Observation::Liveness { state }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn target() -> MonitorTarget {
        MonitorTarget {
            url: "https://a.xyz/".into(),
            first_seen: DateTime::UNIX_EPOCH,
            cohort: super::super::Cohort::Nft,
        }
    }

    #[test]
    fn blocklist_script() {
        let mut p = ScriptedProvider::new("pt", ProviderKind::Blocklist);
        p.script("https://a.xyz/", "35").unwrap();
        let t = target();
        assert_eq!(
            p.poll(&t, t.first_seen + Duration::minutes(30)),
            Observation::Listing {
                outcome: ListingOutcome::Unlisted
            }
        );
        assert_eq!(
            p.poll(&t, t.first_seen + Duration::minutes(40)),
            Observation::Listing {
                outcome: ListingOutcome::Listed
            }
        );
    }

    #[test]
    fn count_series_steps() {
        let mut p = ScriptedProvider::new("vt", ProviderKind::DetectionCount);
        p.script("https://a.xyz/", "0:0; 60:1; 600:3").unwrap();
        let t = target();
        let at = |m| p.poll(&t, t.first_seen + Duration::minutes(m));
        assert_eq!(at(59), Observation::DetectionCount { count: 0 });
        assert_eq!(at(60), Observation::DetectionCount { count: 1 });
        assert_eq!(at(9000), Observation::DetectionCount { count: 3 });
        assert!(p.clone().script("x", "5-3").is_err());
    }

    #[test]
    fn error_cell() {
        let mut p = ScriptedProvider::new("gsb", ProviderKind::Blocklist);
        p.script("https://a.xyz/", "error").unwrap();
        assert!(matches!(
            p.poll(&target(), DateTime::UNIX_EPOCH),
            Observation::Error { .. }
        ));
    }

    #[test]
    fn fixture_file_groups_providers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lists.csv");
        std::fs::write(&path, "url,provider,listed_after_minutes\nhttps://a.xyz/,pt,35\nhttps://a.xyz/,op,\nhttps://b.xyz/,pt,error\n").unwrap();
        let ps = load_fixture_dir(dir.path()).unwrap();
        assert_eq!(
            ps.iter().map(|p| p.id()).collect::<Vec<_>>(),
            vec!["pt", "op"]
        );
        std::fs::write(dir.path().join("bad.csv"), "url,provider,nonsense\n").unwrap();
        assert!(load_fixture_dir(dir.path()).is_err());
    }

    #[test]
    fn live_liveness_tracks_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let site = dir.path().join("a.xyz");
        std::fs::create_dir_all(&site).unwrap();
        std::fs::write(site.join("index.html"), "claim your free azuki mint now").unwrap();
        let p = LiveLiveness::new(
            "live",
            Box::new(crate::snapshot::FixtureTransport::new(dir.path())),
            FetchLimits::default(),
        );
        let t = target();
        assert_eq!(
            p.poll(&t, t.first_seen),
            Observation::Liveness {
                state: Liveness::Active
            }
        );
        std::fs::write(site.join("index.html"), "this domain is parked").unwrap();
        assert_eq!(
            p.poll(&t, t.first_seen),
            Observation::Liveness {
                state: Liveness::Inactive
            }
        );
        std::fs::remove_dir_all(&site).unwrap();
        assert_eq!(
            p.poll(&t, t.first_seen),
            Observation::Liveness {
                state: Liveness::Inactive
            }
        );
    }
}
