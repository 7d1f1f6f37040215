//! Candidate discovery and site analysis: squat, ct-filter, fetch, analyze,
//! features.

use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::Args;
use serde::{Deserialize, Serialize};

use scout_core::ctingest::{filter_stream, read_stream, Watch};
use scout_core::features::{
    extract_features, write_matrix, CsvAccountProvider, CsvNameProvider, FeatureConfig, Label,
    MatrixRow,
};
use scout_core::registry::load_registry;
use scout_core::siteanalysis::{analyze, SiteAnalysis, DEFAULT_MIN_EMBEDDED_CONTRACTS};
use scout_core::snapshot::{
    fetch_all, list_snapshots, load_snapshot, store_snapshot, FetchLimits, FetchStatus,
    FixtureTransport, HttpTransport, Transport,
};
use scout_core::squatgen::{
    dedupe_candidates, fuzz_seed, CandidateDomain, CandidateSet, PermutationRule, DEFAULT_TERMS,
};

use crate::io::{read_lines, read_ndjson, sink, write_ndjson};
use crate::UsageError;

fn epoch() -> DateTime<Utc> {
    DateTime::UNIX_EPOCH
}

#[derive(Debug, Args)]
pub struct SquatArgs {
    /// Collection registry CSV; every official domain is a seed.
    #[arg(long, alias = "registry", required_unless_present = "domain")]
    seeds: Option<PathBuf>,
    /// Fuzz a single domain instead of the registry.
    #[arg(long, conflicts_with = "seeds")]
    domain: Option<String>,
    /// Only the N best-ranked collections.
    #[arg(long)]
    top: Option<usize>,
    /// Comma-separated rule names, or `all`.
    #[arg(long, default_value = "all")]
    rules: String,
    /// Timestamp recorded as first_seen.
    #[arg(long, default_value_t = epoch())]
    as_of: DateTime<Utc>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn squat(a: SquatArgs) -> Result<()> {
    let rules = PermutationRule::parse_list(&a.rules).map_err(|e| UsageError(e.to_string()))?;
    let sets: Vec<CandidateSet> = match (&a.seeds, &a.domain) {
        (_, Some(d)) => vec![fuzz_seed(d, None, &rules, a.as_of)?],
        (Some(p), None) => {
            let reg = load_registry(p)?;
            let seeds = match a.top {
                Some(n) => reg.top_by_rank(n),
                None => reg.records().iter().collect(),
            };
            seeds
                .into_iter()
                .map(|r| fuzz_seed(&r.official_domain, Some(&r.slug), &rules, a.as_of))
                .collect::<Result<_, _>>()?
        }
        (None, None) => unreachable!("clap requires one of --seeds/--domain"),
    };
    let (set, _) = dedupe_candidates(sets.into_iter().map(CandidateSet::into_vec));
    log::info!("{} candidates", set.len());
    write_ndjson(a.out.as_deref(), set.iter())
}

#[derive(Debug, Args)]
pub struct CtFilterArgs {
    /// NDJSON certificate stream.
    #[arg(long = "in", alias = "stream")]
    input: PathBuf,
    /// Known squat candidates (NDJSON from `scout squat`).
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Watch terms; defaults to the built-in list.
    #[arg(long, value_delimiter = ',')]
    terms: Vec<String>,
    /// Ignore certificates issued before this time.
    #[arg(long, default_value_t = epoch())]
    since: DateTime<Utc>,
    /// Receipt time for records that carry none.
    #[arg(long, default_value_t = Utc::now())]
    received_at: DateTime<Utc>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn ct_filter(a: CtFilterArgs) -> Result<()> {
    let known: CandidateSet = match &a.candidates {
        Some(p) => read_ndjson::<CandidateDomain>(p)?.into_iter().collect(),
        None => CandidateSet::new(),
    };
    let terms = if a.terms.is_empty() {
        DEFAULT_TERMS.iter().map(|s| s.to_string()).collect()
    } else {
        a.terms
    };
    let watch = Watch {
        candidates: &known,
        terms,
    };
    let file = crate::io::open(&a.input)?;
    let (found, stats) = filter_stream(read_stream(file, a.received_at), &watch, a.since);
    log::info!(
        "{} records, {} malformed, {} emitted",
        stats.records,
        stats.malformed,
        stats.emitted
    );
    write_ndjson(a.out.as_deref(), &found)
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Candidate NDJSON; each domain is fetched as https://<domain>/.
    #[arg(long = "in", alias = "candidates", required_unless_present = "urls")]
    input: Option<PathBuf>,
    /// Plain list of URLs, one per line.
    #[arg(long, conflicts_with = "input")]
    urls: Option<PathBuf>,
    /// Snapshot corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Serve sites from `<root>/<host>/<path>` instead of the network.
    #[arg(long)]
    fixture_root: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 5 * 1024 * 1024)]
    max_bytes: usize,
    #[arg(long, default_value_t = 10)]
    max_scripts: usize,
    /// Capture time recorded in each snapshot.
    #[arg(long, default_value_t = Utc::now())]
    at: DateTime<Utc>,
    /// Fetch log (NDJSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FetchLine {
    url: String,
    status: Option<FetchStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshot_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn fetch(a: FetchArgs, parallel: usize) -> Result<()> {
    let urls: Vec<String> = match (&a.input, &a.urls) {
        (Some(p), _) => read_ndjson::<CandidateDomain>(p)?
            .into_iter()
            .map(|c| format!("https://{}/", c.domain))
            .collect(),
        (None, Some(p)) => read_lines(p)?,
        (None, None) => unreachable!("clap requires one of --in/--urls"),
    };
    let limits = FetchLimits {
        max_bytes: a.max_bytes,
        timeout: std::time::Duration::from_secs(a.timeout_secs),
        max_scripts: a.max_scripts,
    };
    let transport: Box<dyn Transport> = match &a.fixture_root {
        Some(root) => Box::new(FixtureTransport::new(root)),
        None => Box::new(HttpTransport::new(limits.timeout)),
    };
    let results = fetch_all(&urls, &limits, transport.as_ref(), parallel, a.at);
    let mut lines = Vec::with_capacity(urls.len());
    for (url, r) in urls.into_iter().zip(results) {
        let mut line = FetchLine {
            url,
            status: None,
            snapshot_id: None,
            error: None,
        };
        match r {
            Ok(snap) => {
                line.status = Some(snap.status.clone());
                if snap.status.is_success() {
                    line.snapshot_id = Some(store_snapshot(&a.corpus, &snap)?);
                }
            }
            Err(e) => line.error = Some(e.to_string()),
        }
        lines.push(line);
    }
    log::info!(
        "{} of {} fetched",
        lines.iter().filter(|l| l.snapshot_id.is_some()).count(),
        lines.len()
    );
    write_ndjson(a.out.as_deref(), &lines)
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Analyze only these snapshot ids (default: the whole corpus).
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    /// Registry contracts a page must embed to count as a token-steal kit.
    #[arg(long, default_value_t = DEFAULT_MIN_EMBEDDED_CONTRACTS)]
    min_contracts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn analyze_cmd(a: AnalyzeArgs) -> Result<()> {
    let reg = load_registry(&a.registry)?;
    let ids = if a.ids.is_empty() {
        list_snapshots(&a.corpus)?
    } else {
        a.ids
    };
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let snap = load_snapshot(&a.corpus, &id)?;
        out.push(analyze(&snap, &reg, None, a.min_contracts));
    }
    write_ndjson(a.out.as_deref(), &out)
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Analysis NDJSON from `scout analyze`.
    #[arg(long)]
    analysis: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// `handle,exists,active,followers,created_at` CSV.
    #[arg(long)]
    accounts: Option<PathBuf>,
    /// `contract_address,name` CSV.
    #[arg(long)]
    names: Option<PathBuf>,
    /// Optional `url,label` CSV to produce a training matrix.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Emit the account-activity feature as constant false.
    #[arg(long)]
    disable_f5: bool,
    /// Reference time for account ages.
    #[arg(long, default_value_t = Utc::now())]
    as_of: DateTime<Utc>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct LabelRow {
    url: String,
    label: String,
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    let reg = load_registry(&a.registry)?;
    let accounts = match &a.accounts {
        Some(p) => CsvAccountProvider::load(p, a.as_of)?,
        None => CsvAccountProvider::default(),
    };
    let names = match &a.names {
        Some(p) => CsvNameProvider::load(p)?,
        None => CsvNameProvider::default(),
    };
    let mut labels: HashMap<String, Label> = HashMap::new();
    if let Some(p) = &a.labels {
        let mut rdr =
            csv::Reader::from_path(p).with_context(|| format!("cannot open {}", p.display()))?;
        for row in rdr.deserialize::<LabelRow>() {
            let row = row?;
            let label = row.label.parse::<Label>().map_err(anyhow::Error::msg)?;
            labels.insert(row.url, label);
        }
    }
    let cfg = FeatureConfig {
        disable_f5: a.disable_f5,
    };
    let analyses: Vec<SiteAnalysis> = read_ndjson(&a.analysis)?;
    let mut rows = Vec::with_capacity(analyses.len());
    for an in &analyses {
        let snap = load_snapshot(&a.corpus, &an.snapshot_id)?;
        let mut fv = extract_features(&snap, an, &reg, &accounts, &names, &cfg);
        for n in &fv.notes {
            log::warn!("{}: {n}", an.url);
        }
        if !labels.is_empty() {
            match labels.get(&an.url) {
                Some(l) => fv.label = Some(*l),
                None => bail!("no label for {}", an.url),
            }
        }
        rows.push(MatrixRow {
            snapshot_id: an.snapshot_id.clone(),
            features: fv,
        });
    }
    write_matrix(sink(a.out.as_deref())?, &rows)?;
    Ok(())
}
