//! Random-forest training, prediction, validation and Gini importance,
//! implemented from scratch so every split is reproducible from a seed.

mod metrics;
mod synthetic;
pub mod tree;
mod validate;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, Label, MatrixRow, FEATURE_NAMES};
pub use metrics::{roc_auc, Confusion, Metrics};
pub use synthetic::{synthetic_dataset, SyntheticSpec};
pub use tree::{Node, Tree};
pub use validate::{cross_validate, holdout, stratified_folds, CvReport, HoldoutReport};

const MODEL_FORMAT: &str = "scout-forest/1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class; both labels are required")]
    SingleClass,
    #[error("row {row} has {got} features, expected {expected}")]
    Arity {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("row {row} feature {feature} is not a finite number")]
    NotFinite { row: usize, feature: usize },
    #[error("row {0} has no label")]
    Unlabeled(usize),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("{folds} folds requested for {rows} rows")]
    TooManyFolds { folds: usize, rows: usize },
    #[error("model file: {0}")]
    Model(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Labelled rows with a fixed, named feature order. `labels[i]` is true for
/// phishing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
    ) -> Result<Self, ClassifierError> {
        if rows.len() != labels.len() {
            return Err(ClassifierError::InvalidParams(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let expected = feature_names.len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != expected {
                return Err(ClassifierError::Arity {
                    row,
                    got: r.len(),
                    expected,
                });
            }
            if let Some(feature) = r.iter().position(|v| !v.is_finite()) {
                return Err(ClassifierError::NotFinite { row, feature });
            }
        }
        Ok(Dataset {
            feature_names,
            rows,
            labels,
        })
    }

    /// Builds a dataset from labelled feature-matrix rows.
    pub fn from_matrix(rows: &[MatrixRow]) -> Result<Self, ClassifierError> {
        let labels = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.features
                    .label
                    .map(Label::is_phishing)
                    .ok_or(ClassifierError::Unlabeled(i))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let x = rows
            .iter()
            .map(|r| r.features.to_array().to_vec())
            .collect();
        Dataset::new(
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            x,
            labels,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Copy with one column replaced by a constant.
    pub fn with_constant_feature(&self, feature: usize, value: f64) -> Dataset {
        let mut d = self.clone();
        for r in &mut d.rows {
            r[feature] = value;
        }
        d
    }

    /// Feature-matrix rows (ids `row-00000`, ...), the inverse of
    /// [`Dataset::from_matrix`]. Only datasets with the standard ten
    /// features can be written this way.
    pub fn to_matrix(&self) -> Result<Vec<MatrixRow>, ClassifierError> {
        self.rows
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(i, (r, &phishing))| {
                let arr: [f64; crate::features::FEATURE_COUNT] =
                    r.as_slice()
                        .try_into()
                        .map_err(|_| ClassifierError::Arity {
                            row: i,
                            got: r.len(),
                            expected: crate::features::FEATURE_COUNT,
                        })?;
                let label = if phishing {
                    Label::Phishing
                } else {
                    Label::Benign
                };
                Ok(MatrixRow {
                    snapshot_id: format!("row-{i:05}"),
                    features: FeatureVector::from_array(&arr, Some(label)),
                })
            })
            .collect()
    }

    fn check_trainable(&self) -> Result<(), ClassifierError> {
        if self.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        if self.labels.iter().all(|&l| l) || self.labels.iter().all(|&l| !l) {
            return Err(ClassifierError::SingleClass);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub mtry: usize,
    pub seed: u64,
    /// Train each tree on a bootstrap resample; when false every tree sees
    /// the full dataset.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: None,
            min_leaf: 1,
            mtry: 4,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn validate(&self, n_features: usize) -> Result<(), ClassifierError> {
        if self.n_trees == 0 {
            return Err(ClassifierError::InvalidParams(
                "n_trees must be at least 1".into(),
            ));
        }
        if self.min_leaf == 0 {
            return Err(ClassifierError::InvalidParams(
                "min_leaf must be at least 1".into(),
            ));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(ClassifierError::InvalidParams(format!(
                "mtry must be in 1..={n_features}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub rows: usize,
    pub phishing: usize,
    pub benign: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub training: TrainingInfo,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub phishing: bool,
    pub probability: f64,
}

/// SplitMix64 step; spreads consecutive tree indices into unrelated seeds.
fn tree_seed(seed: u64, tree: usize) -> u64 {
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Row indices of one tree's bootstrap sample, reproducible from the
/// forest seed and the tree index alone.
pub fn bootstrap_sample(n: usize, seed: u64, tree: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, tree));
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

pub fn train(data: &Dataset, params: &ForestParams) -> Result<ForestModel, ClassifierError> {
    data.check_trainable()?;
    params.validate(data.n_features())?;
    let grow = tree::GrowParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: params.mtry,
    };
    let n = data.len();
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            use rand::Rng;
            let seed = tree_seed(params.seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree::grow(data, idx, &grow, seed, &mut rng)
        })
        .collect();
    let phishing = data.labels.iter().filter(|&&l| l).count();
    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        feature_names: data.feature_names.clone(),
        params: *params,
        training: TrainingInfo {
            rows: n,
            phishing,
            benign: n - phishing,
        },
        trees,
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ClassifierError> {
        if x.len() != self.n_features() {
            return Err(ClassifierError::Arity {
                row: 0,
                got: x.len(),
                expected: self.n_features(),
            });
        }
        let probability =
            self.trees.iter().map(|t| t.predict_proba(x)).sum::<f64>() / self.trees.len() as f64;
        Ok(Prediction {
            phishing: probability >= 0.5,
            probability,
        })
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<Metrics, ClassifierError> {
        if test.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        let preds = test
            .rows
            .iter()
            .map(|r| self.predict(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Metrics::from_predictions(&test.labels, &preds))
    }

    /// Mean decrease in impurity per feature, normalised to sum to 1. A
    /// forest with no informative split reports equal importance for every
    /// feature.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut acc = vec![0.0; self.n_features()];
        for t in &self.trees {
            for node in &t.nodes {
                if let Node::Split {
                    feature, decrease, ..
                } = node
                {
                    acc[*feature] += decrease;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        let k = acc.len() as f64;
        self.feature_names
            .iter()
            .zip(acc)
            .map(|(name, v)| (name.clone(), if total > 0.0 { v / total } else { 1.0 / k }))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ClassifierError::Model(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let raw = std::fs::read(path)?;
        let m: ForestModel =
            serde_json::from_slice(&raw).map_err(|e| ClassifierError::Model(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(ClassifierError::Model(format!(
                "unsupported format {:?}",
                m.format
            )));
        }
        if m.trees.is_empty() {
            return Err(ClassifierError::Model("model has no trees".into()));
        }
        Ok(m)
    }
}
