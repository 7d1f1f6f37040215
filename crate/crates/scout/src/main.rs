//! `scout`: discover, classify and measure NFT phishing sites.

mod discover;
mod io;
mod measure;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;

use scout_core::config::{load_config, PipelineConfig};
use scout_core::pipeline::{run_pipeline, PipelineError, RunCounts};

/// Bad invocation: missing inputs or conflicting options.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "scout",
    version,
    about = "Find, classify and track NFT phishing sites"
)]
struct Cli {
    /// Pipeline configuration (TOML). Supplies defaults for several subcommands.
    #[arg(long, global = true, env = "SCOUT_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads for fetching.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate look-alike domains for registry collections.
    Squat(discover::SquatArgs),
    /// Filter a certificate stream down to suspicious domains.
    CtFilter(discover::CtFilterArgs),
    /// Capture snapshots of candidate sites.
    Fetch(discover::FetchArgs),
    /// Static analysis of stored snapshots.
    Analyze(discover::AnalyzeArgs),
    /// Build the feature matrix.
    Features(discover::FeaturesArgs),
    /// Train a random forest.
    Train(model::TrainArgs),
    /// k-fold cross-validation.
    Cv(model::CvArgs),
    /// Score a feature matrix with a trained model.
    Classify(model::ClassifyArgs),
    /// Poll blocklists and liveness for a set of sites.
    Monitor(measure::MonitorArgs),
    /// Summaries over a monitor event log.
    Report(measure::ReportArgs),
    /// Revenue of attacker wallets.
    ChainReport(measure::ChainReportArgs),
    /// Giveaway promotion analysis.
    Promo(measure::PromoArgs),
    /// Run discovery through classification end to end.
    Pipeline(PipelineArgs),
}

#[derive(Debug, clap::Args)]
struct PipelineArgs {
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct PipelineSummary<'a> {
    output_dir: &'a std::path::Path,
    stages_completed: usize,
    files: usize,
    counts: &'a RunCounts,
}

fn load(cli_config: &Option<PathBuf>) -> Result<Option<PipelineConfig>> {
    Ok(match cli_config {
        Some(p) => Some(load_config(p)?),
        None => None,
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load(&cli.config)?;
    let parallel = cli
        .parallel
        .or(cfg.as_ref().map(|c| c.parallel))
        .unwrap_or(4)
        .max(1);
    match cli.command {
        Command::Squat(a) => discover::squat(a),
        Command::CtFilter(a) => discover::ct_filter(a),
        Command::Fetch(a) => discover::fetch(a, parallel),
        Command::Analyze(a) => discover::analyze_cmd(a),
        Command::Features(a) => discover::features(a),
        Command::Train(a) => model::train_cmd(a, cfg.as_ref()),
        Command::Cv(a) => model::cv(a, cfg.as_ref()),
        Command::Classify(a) => model::classify(a),
        Command::Monitor(a) => measure::monitor(a, cfg.as_ref()),
        Command::Report(a) => measure::report(a),
        Command::ChainReport(a) => measure::chain_report_cmd(a),
        Command::Promo(a) => measure::promo(a),
        Command::Pipeline(a) => {
            let mut cfg = cfg.ok_or_else(|| UsageError("pipeline needs --config".into()))?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(d) = a.output_dir {
                cfg.output_dir = d;
            }
            cfg.parallel = parallel;
            let outcome = run_pipeline(&cfg)?;
            io::write_json(
                None,
                &PipelineSummary {
                    output_dir: &outcome.output_dir,
                    stages_completed: outcome.manifest.stages_completed.len(),
                    files: outcome.manifest.files.len(),
                    counts: &outcome.counts,
                },
            )
        }
    }
}

/// The error and its causes on one line, skipping causes whose text the
/// outer message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        1
    } else if matches!(
        err.downcast_ref::<PipelineError>(),
        Some(PipelineError::Stage { .. })
    ) {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
