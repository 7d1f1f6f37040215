//! Poll scheduler. Every `(target, provider)` pair is polled at
//! `first_seen + k·interval` until the horizon or a terminal state: listed
//! for blocklists, confirmed inactive for liveness.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;

use super::{
    EventLog, ListingOutcome, Liveness, MonitorTarget, Observation, PollSample, Provider,
    SentinelError,
};

/// Inactive polls in a row needed before a site counts as taken down.
pub const INACTIVE_CONFIRMATIONS: u32 = 2;

pub trait Clock {
    fn now(&self) -> DateTime<Utc>;
    fn sleep_until(&mut self, t: DateTime<Utc>);
}

/// Jumps straight to each requested instant.
#[derive(Debug, Clone, Copy)]
pub struct VirtualClock {
    now: DateTime<Utc>,
}

impl VirtualClock {
    pub fn starting_at(now: DateTime<Utc>) -> Self {
        VirtualClock { now }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        self.now
    }

    fn sleep_until(&mut self, t: DateTime<Utc>) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&mut self, t: DateTime<Utc>) {
        if let Ok(d) = (t - Utc::now()).to_std() {
            std::thread::sleep(d);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorPlan {
    pub interval: Duration,
    pub horizon: Duration,
}

impl MonitorPlan {
    fn validate(&self) -> Result<(), SentinelError> {
        if self.interval <= Duration::zero() || self.horizon < self.interval {
            return Err(SentinelError::InvalidSchedule);
        }
        Ok(())
    }
}

type Slot = Reverse<(DateTime<Utc>, String, String, usize, usize, i32)>;

/// Polls every pair on its grid and returns the samples. Polls due at the
/// same instant run concurrently; their samples are appended in
/// `(provider, target)` order so the log does not depend on scheduling.
pub fn run_monitor(
    targets: &[MonitorTarget],
    providers: &[&dyn Provider],
    plan: MonitorPlan,
    clock: &mut dyn Clock,
) -> Result<EventLog, SentinelError> {
    plan.validate()?;
    let steps = (plan.horizon.num_seconds() / plan.interval.num_seconds()) as i32;
    let mut heap: BinaryHeap<Slot> = BinaryHeap::new();
    for (ti, t) in targets.iter().enumerate() {
        for (pi, p) in providers.iter().enumerate() {
            heap.push(Reverse((
                t.first_seen,
                p.id().to_string(),
                t.url.clone(),
                pi,
                ti,
                0,
            )));
        }
    }
    let mut inactive_run: HashMap<(usize, usize), u32> = HashMap::new();
    let mut log = EventLog::new();
    while let Some(Reverse((at, ..))) = heap.peek().cloned() {
        let mut batch = Vec::new();
        while heap.peek().is_some_and(|Reverse(s)| s.0 == at) {
            batch.push(heap.pop().expect("peeked").0);
        }
        clock.sleep_until(at);
        let polled_at = clock.now();
        let results: Vec<Observation> = batch
            .par_iter()
            .map(|(_, _, _, pi, ti, _)| providers[*pi].poll(&targets[*ti], at))
            .collect();
        for ((_, pid, url, pi, ti, k), obs) in batch.into_iter().zip(results) {
            let terminal = match &obs {
                Observation::Listing {
                    outcome: ListingOutcome::Listed,
                } => true,
                Observation::Liveness {
                    state: Liveness::Inactive,
                } => {
                    let run = inactive_run.entry((pi, ti)).or_default();
                    *run += 1;
                    *run >= INACTIVE_CONFIRMATIONS
                }
                _ => {
                    inactive_run.remove(&(pi, ti));
                    false
                }
            };
            log.append(PollSample {
                target: url.clone(),
                provider: pid.clone(),
                polled_at,
                observation: obs,
            });
            if !terminal && k < steps {
                let next = targets[ti].first_seen + plan.interval * (k + 1);
                heap.push(Reverse((next, pid, url, pi, ti, k + 1)));
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::super::{Cohort, ProviderKind, ScriptedProvider};
    use super::*;

    fn t0() -> DateTime<Utc> {
        DateTime::UNIX_EPOCH
    }

    fn plan() -> MonitorPlan {
        MonitorPlan {
            interval: Duration::minutes(10),
            horizon: Duration::hours(168),
        }
    }

    fn target(url: &str) -> MonitorTarget {
        MonitorTarget {
            url: url.into(),
            first_seen: t0(),
            cohort: Cohort::Nft,
        }
    }

    #[test]
    fn listing_observed_on_next_grid_point() {
        let mut p = ScriptedProvider::new("pt", ProviderKind::Blocklist);
        p.script("https://a.xyz/", "35").unwrap();
        let log = run_monitor(
            &[target("https://a.xyz/")],
            &[&p],
            plan(),
            &mut VirtualClock::starting_at(t0()),
        )
        .unwrap();
        let listed: Vec<_> = log
            .samples()
            .iter()
            .filter(|s| {
                s.observation
                    == Observation::Listing {
                        outcome: ListingOutcome::Listed,
                    }
            })
            .collect();
        assert_eq!(listed.len(), 1);
        assert_eq!(listed[0].polled_at, t0() + Duration::minutes(40));
        // terminal: nothing after the listing
        assert_eq!(log.len(), 5);
    }

    #[test]
    fn never_listed_polls_whole_horizon() {
        let p = ScriptedProvider::new("pt", ProviderKind::Blocklist);
        let log = run_monitor(
            &[target("https://a.xyz/")],
            &[&p],
            plan(),
            &mut VirtualClock::starting_at(t0()),
        )
        .unwrap();
        assert_eq!(log.len(), 6 * 168 + 1);
    }

    #[test]
    fn errors_are_samples() {
        let mut p = ScriptedProvider::new("gsb", ProviderKind::Blocklist);
        p.script("https://a.xyz/", "error").unwrap();
        let log = run_monitor(
            &[target("https://a.xyz/")],
            &[&p],
            plan(),
            &mut VirtualClock::starting_at(t0()),
        )
        .unwrap();
        assert!(log
            .samples()
            .iter()
            .all(|s| matches!(s.observation, Observation::Error { .. })));
        assert_eq!(log.len(), 6 * 168 + 1);
    }

    #[test]
    fn liveness_stops_after_two_inactive() {
        let mut p = ScriptedProvider::new("live", ProviderKind::Liveness);
        p.script("https://a.xyz/", "420").unwrap();
        let log = run_monitor(
            &[target("https://a.xyz/")],
            &[&p],
            plan(),
            &mut VirtualClock::starting_at(t0()),
        )
        .unwrap();
        let last = log.samples().last().unwrap();
        assert_eq!(last.polled_at, t0() + Duration::minutes(430));
        assert_eq!(log.len(), 44);
    }

    #[test]
    fn rejects_bad_plan() {
        let p = ScriptedProvider::new("pt", ProviderKind::Blocklist);
        let bad = MonitorPlan {
            interval: Duration::hours(2),
            horizon: Duration::hours(1),
        };
        assert!(run_monitor(&[], &[&p], bad, &mut VirtualClock::starting_at(t0())).is_err());
    }

    #[test]
    fn samples_monotone_per_pair() {
        let p = ScriptedProvider::new("pt", ProviderKind::Blocklist);
        let q = ScriptedProvider::new("op", ProviderKind::Blocklist);
        let targets = [
            target("https://a.xyz/"),
            MonitorTarget {
                first_seen: t0() + Duration::minutes(3),
                ..target("https://b.xyz/")
            },
        ];
        let short = MonitorPlan {
            interval: Duration::minutes(10),
            horizon: Duration::hours(2),
        };
        let log = run_monitor(
            &targets,
            &[&p, &q],
            short,
            &mut VirtualClock::starting_at(t0()),
        )
        .unwrap();
        for t in &targets {
            for pid in ["pt", "op"] {
                let s = log.series(&t.url, pid);
                assert_eq!(s.len(), 13);
                assert!(s.windows(2).all(|w| w[0].polled_at < w[1].polled_at));
            }
        }
    }
}
