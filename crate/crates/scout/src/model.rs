//! Classifier subcommands: train, cv, classify.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use scout_core::classifier::{
    cross_validate, synthetic_dataset, train, Dataset, ForestModel, ForestParams, SyntheticSpec,
};
use scout_core::config::PipelineConfig;
use scout_core::features::{load_matrix, write_matrix};

use crate::io::{open, sink, write_json, write_ndjson};
use crate::UsageError;

/// Forest options. Precedence: flags, then `--params`, then the config
/// file, then the library defaults.
#[derive(Debug, Args)]
pub struct ForestArgs {
    /// JSON document of forest parameters (any subset of the fields).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train every tree on the full data instead of a bootstrap resample.
    #[arg(long)]
    no_bootstrap: bool,
}

impl ForestArgs {
    fn params(&self, cfg: Option<&PipelineConfig>) -> Result<ForestParams> {
        let base = match &self.params {
            Some(p) => serde_json::from_reader(open(p)?)
                .with_context(|| format!("bad parameters in {}", p.display()))?,
            None => cfg.map(PipelineConfig::forest_params).unwrap_or_default(),
        };
        Ok(ForestParams {
            n_trees: self.trees.unwrap_or(base.n_trees),
            mtry: self.mtry.unwrap_or(base.mtry),
            max_depth: self.max_depth.or(base.max_depth),
            min_leaf: self.min_leaf.unwrap_or(base.min_leaf),
            seed: self.seed.unwrap_or(base.seed),
            bootstrap: base.bootstrap && !self.no_bootstrap,
        })
    }
}

/// Where the training rows come from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labeled feature matrix CSV.
    #[arg(long, alias = "matrix", required_unless_present = "synthetic")]
    features: Option<PathBuf>,
    /// Use a seeded synthetic corpus of this many rows instead.
    #[arg(long, conflicts_with = "features")]
    synthetic: Option<usize>,
    /// Treat the account-activity feature as constant false.
    #[arg(long)]
    disable_f5: bool,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let data = match (&self.features, self.synthetic) {
            (Some(p), _) => Dataset::from_matrix(&load_matrix(p)?)?,
            (None, Some(rows)) => synthetic_dataset(&SyntheticSpec {
                rows,
                seed,
                ..Default::default()
            }),
            (None, None) => return Err(UsageError("give --features or --synthetic".into()).into()),
        };
        // f5 is the fifth column
        Ok(if self.disable_f5 {
            data.with_constant_feature(4, 0.0)
        } else {
            data
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Model JSON output.
    #[arg(long, alias = "out")]
    model: PathBuf,
    /// Also write the training rows as a feature matrix CSV.
    #[arg(long)]
    save_matrix: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainSummary {
    rows: usize,
    trees: usize,
    feature_importance: Vec<(String, f64)>,
}

pub fn train_cmd(a: TrainArgs, cfg: Option<&PipelineConfig>) -> Result<()> {
    let params = a.forest.params(cfg)?;
    let data = a.data.load(params.seed)?;
    if let Some(p) = &a.save_matrix {
        write_matrix(sink(Some(p))?, &data.to_matrix()?)?;
    }
    let model = train(&data, &params)?;
    model.save(&a.model)?;
    write_json(
        None,
        &TrainSummary {
            rows: data.len(),
            trees: model.trees.len(),
            feature_importance: model.feature_importance(),
        },
    )
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, alias = "folds", default_value_t = 10)]
    k: usize,
    /// Seed for the fold assignment (defaults to the forest seed).
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn cv(a: CvArgs, cfg: Option<&PipelineConfig>) -> Result<()> {
    let params = a.forest.params(cfg)?;
    let data = a.data.load(params.seed)?;
    let report = cross_validate(&data, a.k, a.split_seed.unwrap_or(params.seed), &params)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(a.out.as_deref(), &report)
}

#[derive(Serialize)]
struct MatrixVerdict<'a> {
    snapshot_id: &'a str,
    phishing: bool,
    probability: f64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature matrix CSV (labels are ignored).
    #[arg(long, alias = "matrix")]
    features: PathBuf,
    /// Verdicts NDJSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn classify(a: ClassifyArgs) -> Result<()> {
    let model = ForestModel::load(&a.model)?;
    let rows = load_matrix(&a.features)?;
    let mut verdicts = Vec::with_capacity(rows.len());
    for r in &rows {
        let p = model.predict(&r.features.to_array())?;
        verdicts.push(MatrixVerdict {
            snapshot_id: &r.snapshot_id,
            phishing: p.phishing,
            probability: p.probability,
        });
    }
    write_ndjson(a.out.as_deref(), &verdicts)
}
