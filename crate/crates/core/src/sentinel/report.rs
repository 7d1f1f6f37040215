//! Reports recomputed from an event log: blocklist coverage and speed,
//! takedown times and detection-count histograms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::monitor::INACTIVE_CONFIRMATIONS;
use super::{
    Cohort, EventLog, ListingOutcome, Liveness, MonitorTarget, Observation, SentinelError,
};
use crate::stats::{median, Quartiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub provider: String,
    pub cohort: Cohort,
    pub coverage_fraction: f64,
    /// Median minutes from first sighting to first listed poll, over the
    /// detected targets only.
    pub median_speed_minutes: Option<f64>,
    pub n_detected: usize,
    pub n_total: usize,
    pub errors: usize,
}

impl CoverageReport {
    pub fn median_speed_display(&self) -> String {
        self.median_speed_minutes
            .map(format_hhmm)
            .unwrap_or_else(|| "n/a".to_string())
    }
}

/// `hh:mm`, rounded to the nearest minute; hours are not wrapped.
pub fn format_hhmm(minutes: f64) -> String {
    let m = minutes.round() as i64;
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn minutes(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 60_000.0
}

/// Minutes to first listing per target for one provider; `None` when never
/// listed.
fn detection_speeds<'a>(
    log: &EventLog,
    targets: &'a [MonitorTarget],
    provider: &str,
) -> Vec<(&'a MonitorTarget, Option<f64>)> {
    targets
        .iter()
        .map(|t| {
            let speed = log
                .series(&t.url, provider)
                .into_iter()
                .find(|s| {
                    s.observation
                        == Observation::Listing {
                            outcome: ListingOutcome::Listed,
                        }
                })
                .map(|s| minutes(s.polled_at - t.first_seen));
            (t, speed)
        })
        .collect()
}

pub fn coverage_stats(
    log: &EventLog,
    targets: &[MonitorTarget],
    provider: &str,
    cohort: Cohort,
) -> Result<CoverageReport, SentinelError> {
    let members: Vec<MonitorTarget> = targets
        .iter()
        .filter(|t| t.cohort == cohort)
        .cloned()
        .collect();
    if members.is_empty() {
        return Err(SentinelError::EmptyCohort(cohort));
    }
    let speeds: Vec<f64> = detection_speeds(log, &members, provider)
        .into_iter()
        .filter_map(|(_, s)| s)
        .collect();
    let urls: BTreeSet<&str> = members.iter().map(|t| t.url.as_str()).collect();
    let errors = log
        .samples()
        .iter()
        .filter(|s| s.provider == provider && urls.contains(s.target.as_str()))
        .filter(|s| matches!(s.observation, Observation::Error { .. }))
        .count();
    Ok(CoverageReport {
        provider: provider.to_string(),
        cohort,
        coverage_fraction: speeds.len() as f64 / members.len() as f64,
        median_speed_minutes: median(&speeds),
        n_detected: speeds.len(),
        n_total: members.len(),
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub elapsed_minutes: f64,
    pub provider: String,
    pub cohort: Cohort,
    pub coverage_fraction: f64,
}

/// Cumulative coverage per provider and cohort at every grid step.
pub fn coverage_timeseries(
    log: &EventLog,
    targets: &[MonitorTarget],
    interval: Duration,
    horizon: Duration,
) -> Vec<CoveragePoint> {
    let providers: Vec<String> = log
        .providers()
        .into_iter()
        .filter(|p| {
            log.samples()
                .iter()
                .any(|s| &s.provider == p && matches!(s.observation, Observation::Listing { .. }))
        })
        .collect();
    let cohorts: BTreeSet<Cohort> = targets.iter().map(|t| t.cohort).collect();
    let steps = horizon.num_seconds() / interval.num_seconds().max(1);
    let mut out = Vec::new();
    for p in &providers {
        for &c in &cohorts {
            let members: Vec<MonitorTarget> =
                targets.iter().filter(|t| t.cohort == c).cloned().collect();
            let speeds = detection_speeds(log, &members, p);
            for k in 0..=steps {
                let at = minutes(interval * k as i32);
                let hit = speeds
                    .iter()
                    .filter(|(_, s)| s.is_some_and(|s| s <= at))
                    .count();
                out.push(CoveragePoint {
                    elapsed_minutes: at,
                    provider: p.clone(),
                    cohort: c,
                    coverage_fraction: hit as f64 / members.len() as f64,
                });
            }
        }
    }
    out
}

pub fn write_coverage_csv(w: impl Write, points: &[CoveragePoint]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["elapsed_minutes", "provider", "cohort", "coverage_fraction"])?;
    for p in points {
        wtr.write_record([
            p.elapsed_minutes.to_string(),
            p.provider.clone(),
            p.cohort.to_string(),
            format!("{:.6}", p.coverage_fraction),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTakedown {
    pub url: String,
    /// Minutes from first sighting to the first of the confirming inactive
    /// polls; `None` while still active at the horizon.
    pub inactive_after_minutes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakedownReport {
    pub targets: Vec<TargetTakedown>,
    pub still_active: usize,
    /// Quartiles of the observed takedown times, in minutes.
    pub quartiles: Option<Quartiles>,
}

/// A target is down at the first poll that starts a run of consecutive
/// inactive liveness polls long enough to confirm it; with several
/// liveness providers the earliest confirmation counts.
pub fn takedown_stats(log: &EventLog, targets: &[MonitorTarget]) -> TakedownReport {
    let providers = log.providers();
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let mut best: Option<f64> = None;
        for p in &providers {
            let series = log.series(&t.url, p);
            let mut run = 0u32;
            let mut run_start = None;
            for s in series {
                match s.observation {
                    Observation::Liveness {
                        state: Liveness::Inactive,
                    } => {
                        if run == 0 {
                            run_start = Some(s.polled_at);
                        }
                        run += 1;
                        if run >= INACTIVE_CONFIRMATIONS {
                            let m = minutes(run_start.expect("run started") - t.first_seen);
                            best = Some(best.map_or(m, |b: f64| b.min(m)));
                            break;
                        }
                    }
                    _ => run = 0,
                }
            }
        }
        out.push(TargetTakedown {
            url: t.url.clone(),
            inactive_after_minutes: best,
        });
    }
    let times: Vec<f64> = out
        .iter()
        .filter_map(|t| t.inactive_after_minutes)
        .collect();
    TakedownReport {
        still_active: out.len() - times.len(),
        quartiles: Quartiles::of(&times),
        targets: out,
    }
}

/// Histogram of each target's highest detection count across the given
/// providers (all providers when `group` is empty).
pub fn detection_histogram(log: &EventLog, group: &[String]) -> BTreeMap<u32, usize> {
    let mut max_by_target: BTreeMap<&str, u32> = BTreeMap::new();
    for s in log.samples() {
        if !group.is_empty() && !group.contains(&s.provider) {
            continue;
        }
        if let Observation::DetectionCount { count } = s.observation {
            let e = max_by_target.entry(s.target.as_str()).or_insert(count);
            *e = (*e).max(count);
        }
    }
    let mut hist = BTreeMap::new();
    for c in max_by_target.into_values() {
        *hist.entry(c).or_insert(0) += 1;
    }
    hist
}
