//! Measurement subcommands: monitor, report, chain-report, promo.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Subcommand};
use serde::Serialize;

use scout_core::chainlytics::{
    chain_report, load_transactions, read_categories, read_wallet_list, OutlierRule, PriceTable,
    Window,
};
use scout_core::config::PipelineConfig;
use scout_core::promolytics::{
    bot_fraction, default_sweep, follower_gain_stats, label_collection, read_engagement,
    read_evidence, read_gains, read_tweets, threshold_sweep, wilcoxon_rank_sum, FraudLabel,
    LabelRules, PromoGrammar, RankSumMode, Relation, DEFAULT_BOT_THRESHOLD,
};
use scout_core::sentinel::{
    coverage_stats, coverage_timeseries, detection_histogram, load_fixture_dir, parse_duration,
    read_targets, run_monitor, takedown_stats, write_coverage_csv, Clock, Cohort, EventLog,
    LiveLiveness, MonitorPlan, Observation, Provider, VirtualClock, WallClock,
};
use scout_core::snapshot::{FetchLimits, HttpTransport};

use crate::io::{open, read_numbers, sink, write_json, write_ndjson};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// NDJSON targets: `{"url", "first_seen", "cohort"}`.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Directory of scripted provider fixtures.
    #[arg(long)]
    providers: Option<PathBuf>,
    /// Also poll liveness over HTTP.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    /// Run on a virtual clock that jumps from poll to poll, starting at
    /// the earliest first sighting. Without it polls wait for real time.
    #[arg(long)]
    simulate: bool,
    /// Event log output (NDJSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn monitor(a: MonitorArgs, cfg: Option<&PipelineConfig>) -> Result<()> {
    let section = cfg.map(|c| c.monitor.clone()).unwrap_or_default();
    let targets_path = a
        .targets
        .or(section.targets)
        .ok_or_else(|| UsageError("no --targets given".into()))?;
    let interval = parse_duration(&a.interval.unwrap_or(section.interval))?;
    let horizon = parse_duration(&a.horizon.unwrap_or(section.horizon))?;
    let targets = read_targets(open(&targets_path)?)?;
    let mut owned: Vec<Box<dyn Provider>> = Vec::new();
    if let Some(dir) = a.providers.or(section.providers) {
        owned.extend(
            load_fixture_dir(&dir)?
                .into_iter()
                .map(|p| Box::new(p) as Box<dyn Provider>),
        );
    }
    if a.live {
        let limits = FetchLimits::default();
        owned.push(Box::new(LiveLiveness::new(
            "http-liveness",
            Box::new(HttpTransport::new(limits.timeout)),
            limits,
        )));
    }
    if owned.is_empty() {
        return Err(UsageError("no providers: give --providers and/or --live".into()).into());
    }
    let providers: Vec<&dyn Provider> = owned.iter().map(|p| p.as_ref()).collect();
    let start = targets
        .iter()
        .map(|t| t.first_seen)
        .min()
        .unwrap_or_else(Utc::now);
    let mut virtual_clock = VirtualClock::starting_at(start);
    let mut wall = WallClock;
    let clock: &mut dyn Clock = if a.simulate {
        &mut virtual_clock
    } else {
        &mut wall
    };
    let log = run_monitor(
        &targets,
        &providers,
        MonitorPlan { interval, horizon },
        clock,
    )?;
    let mut w = sink(a.out.as_deref())?;
    log.write_ndjson(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(subcommand)]
    kind: ReportKind,
}

#[derive(Debug, Subcommand)]
enum ReportKind {
    /// Per-provider coverage and median detection speed.
    Coverage {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Providers to report (default: every blocklist in the log).
        #[arg(long, value_delimiter = ',')]
        provider: Vec<String>,
        /// Also write the coverage-over-time CSV here.
        #[arg(long)]
        timeseries: Option<PathBuf>,
        #[arg(long, default_value = "10m")]
        interval: String,
        #[arg(long, default_value = "168h")]
        horizon: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time until each site went offline.
    Takedown {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution of final detection counts.
    Histogram {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_delimiter = ',')]
        provider: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct CoverageRow {
    #[serde(flatten)]
    report: scout_core::sentinel::CoverageReport,
    median_speed: String,
}

fn read_log(path: &std::path::Path) -> Result<EventLog> {
    Ok(EventLog::read_ndjson(open(path)?)?)
}

pub fn report(a: ReportArgs) -> Result<()> {
    match a.kind {
        ReportKind::Coverage {
            events,
            targets,
            provider,
            timeseries,
            interval,
            horizon,
            out,
        } => {
            let log = read_log(&events)?;
            let targets = read_targets(open(&targets)?)?;
            let providers = if provider.is_empty() {
                log.providers()
                    .into_iter()
                    .filter(|p| {
                        log.samples().iter().any(|s| {
                            &s.provider == p && matches!(s.observation, Observation::Listing { .. })
                        })
                    })
                    .collect()
            } else {
                provider
            };
            let mut rows = Vec::new();
            for p in &providers {
                for cohort in [Cohort::Nft, Cohort::Regular] {
                    if targets.iter().any(|t| t.cohort == cohort) {
                        let report = coverage_stats(&log, &targets, p, cohort)?;
                        rows.push(CoverageRow {
                            median_speed: report.median_speed_display(),
                            report,
                        });
                    }
                }
            }
            if let Some(ts) = timeseries {
                let points = coverage_timeseries(
                    &log,
                    &targets,
                    parse_duration(&interval)?,
                    parse_duration(&horizon)?,
                );
                write_coverage_csv(sink(Some(&ts))?, &points)?;
            }
            write_json(out.as_deref(), &rows)
        }
        ReportKind::Takedown {
            events,
            targets,
            out,
        } => {
            let log = read_log(&events)?;
            let targets = read_targets(open(&targets)?)?;
            write_json(out.as_deref(), &takedown_stats(&log, &targets))
        }
        ReportKind::Histogram {
            events,
            provider,
            out,
        } => {
            let log = read_log(&events)?;
            write_json(out.as_deref(), &detection_histogram(&log, &provider))
        }
    }
}

#[derive(Debug, Args)]
pub struct ChainReportArgs {
    /// Transaction CSV export.
    #[arg(long)]
    txs: PathBuf,
    /// Attacker wallets, one per line.
    #[arg(long)]
    wallets: PathBuf,
    /// Daily `date,usd` price CSV.
    #[arg(long)]
    prices: PathBuf,
    /// `wallet,category` CSV.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Window start (inclusive).
    #[arg(long)]
    from: Option<DateTime<Utc>>,
    /// Window end (inclusive).
    #[arg(long)]
    to: Option<DateTime<Utc>>,
    /// Apply 1.5×IQR outlier exclusion to these categories.
    #[arg(long, value_delimiter = ',')]
    exclude_outliers: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn chain_report_cmd(a: ChainReportArgs) -> Result<()> {
    let txs = load_transactions(&a.txs)?;
    let wallets = read_wallet_list(open(&a.wallets)?)?;
    let prices = PriceTable::load(&a.prices)?;
    let categories = match &a.categories {
        Some(p) => read_categories(open(p)?)?,
        None => BTreeMap::new(),
    };
    let window = Window {
        from: a.from.map(|t| t.timestamp()),
        to: a.to.map(|t| t.timestamp()),
    };
    let rule = (!a.exclude_outliers.is_empty()).then(|| OutlierRule {
        categories: a.exclude_outliers.clone(),
        k: 1.5,
    });
    let report = chain_report(&txs, &wallets, &prices, &categories, window, rule.as_ref())?;
    write_json(a.out.as_deref(), &report)
}

#[derive(Debug, Args)]
pub struct PromoArgs {
    #[command(subcommand)]
    kind: PromoKind,
}

#[derive(Debug, Subcommand)]
enum PromoKind {
    /// Extract giveaway tweets from an NDJSON tweet dump.
    Parse {
        #[arg(long)]
        tweets: PathBuf,
        /// Replace the bundled grammar.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bot share at a threshold, plus a threshold sweep.
    Bots {
        #[arg(long)]
        engagement: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOT_THRESHOLD)]
        threshold: f64,
        /// Sweep thresholds (default 0.00, 0.05, ..., 1.00).
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        /// Restrict the sweep to one relation.
        #[arg(long)]
        relation: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank-sum test between two samples (one number per line).
    Wilcoxon {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// exact or normal; defaults to exact for small samples.
        #[arg(long)]
        mode: Option<RankSumMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Follower-gain statistics per account status.
    Gains {
        /// `collection,status,gain` CSV.
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rule-based labels for promoted collections.
    Label {
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long)]
        now: DateTime<Utc>,
        /// Count a rug pull when either the website or the marketplace page is gone.
        #[arg(long)]
        either_dead: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct BotsOutput {
    breakdown: scout_core::promolytics::BotBreakdown,
    sweep: Vec<scout_core::promolytics::SweepPoint>,
}

#[derive(Serialize)]
struct LabelRow {
    collection: String,
    label: FraudLabel,
}

pub fn promo(a: PromoArgs) -> Result<()> {
    match a.kind {
        PromoKind::Parse {
            tweets,
            patterns,
            out,
        } => {
            let grammar = match patterns {
                Some(p) => PromoGrammar::load(&p)?,
                None => PromoGrammar::bundled(),
            };
            let tweets = read_tweets(open(&tweets)?)?;
            let found: Vec<_> = tweets
                .iter()
                .filter_map(|t| grammar.parse_tweet(&t.id, &t.author, &t.text))
                .collect();
            log::info!("{} of {} tweets are giveaways", found.len(), tweets.len());
            write_ndjson(out.as_deref(), &found)
        }
        PromoKind::Bots {
            engagement,
            threshold,
            sweep,
            relation,
            out,
        } => {
            let records = read_engagement(open(&engagement)?)?;
            let breakdown = bot_fraction(&records, threshold)?;
            let subset: Vec<_> = match relation {
                Some(r) => {
                    let rel: Relation =
                        serde_json::from_value(serde_json::Value::String(r.clone()))
                            .map_err(|_| UsageError(format!("unknown relation {r:?}")))?;
                    records.into_iter().filter(|e| e.relation == rel).collect()
                }
                None => records,
            };
            let thresholds = if sweep.is_empty() {
                default_sweep()
            } else {
                sweep
            };
            write_json(
                out.as_deref(),
                &BotsOutput {
                    breakdown,
                    sweep: threshold_sweep(&subset, &thresholds)?,
                },
            )
        }
        PromoKind::Wilcoxon { x, y, mode, out } => {
            let xs = read_numbers(&x)?;
            let ys = read_numbers(&y)?;
            let mode = mode.unwrap_or(RankSumMode::auto(xs.len(), ys.len()));
            write_json(out.as_deref(), &wilcoxon_rank_sum(&xs, &ys, mode)?)
        }
        PromoKind::Gains { gains, out } => {
            let groups = read_gains(open(&gains)?)?;
            write_json(out.as_deref(), &follower_gain_stats(&groups)?)
        }
        PromoKind::Label {
            evidence,
            now,
            either_dead,
            out,
        } => {
            let rows = read_evidence(open(&evidence).context("evidence CSV")?)?;
            let rules = LabelRules {
                rugpull_requires_both: !either_dead,
                ..Default::default()
            };
            let labels: Vec<LabelRow> = rows
                .iter()
                .map(|e| LabelRow {
                    collection: e.collection.clone(),
                    label: label_collection(e, now, &rules),
                })
                .collect();
            let mut w = csv::Writer::from_writer(sink(out.as_deref())?);
            for l in &labels {
                w.serialize(l)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
