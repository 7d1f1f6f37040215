//! Pipeline configuration: one TOML document with a section per stage.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every source of randomness derives from the top-level `seed`, and
//! `as_of` stands in for "now" wherever a stage needs a timestamp, so runs
//! over the same inputs are reproducible.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ForestParams;
use crate::sentinel::parse_duration;
use crate::siteanalysis::DEFAULT_MIN_EMBEDDED_CONTRACTS;
use crate::squatgen::{PermutationRule, DEFAULT_TERMS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: &'static str, path: String },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub as_of: DateTime<Utc>,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    pub registry: RegistrySection,
    #[serde(default)]
    pub squat: SquatSection,
    #[serde(default)]
    pub ct: CtSection,
    #[serde(default)]
    pub fetch: FetchSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub monitor: MonitorSection,
}

fn default_parallel() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySection {
    pub path: PathBuf,
    /// Only the best-ranked collections seed the fuzzer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SquatSection {
    /// Comma-separated rule names, or `all`.
    pub rules: String,
    pub terms: Vec<String>,
}

impl Default for SquatSection {
    fn default() -> Self {
        SquatSection {
            rules: "all".into(),
            terms: DEFAULT_TERMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub since: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FetchSection {
    /// Serve sites from `<fixture_root>/<host>/<path>` instead of the network.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture_root: Option<PathBuf>,
    pub max_bytes: usize,
    pub timeout_secs: u64,
    pub max_scripts: usize,
}

impl Default for FetchSection {
    fn default() -> Self {
        FetchSection {
            fixture_root: None,
            max_bytes: 5 * 1024 * 1024,
            timeout_secs: 20,
            max_scripts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub min_contracts: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            min_contracts: DEFAULT_MIN_EMBEDDED_CONTRACTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accounts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract_names: Option<PathBuf>,
    pub disable_f5: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    /// A previously trained model. Takes precedence over `training_matrix`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_matrix: Option<PathBuf>,
    pub folds: usize,
    /// The `seed` inside is ignored; the top-level seed is used instead.
    pub forest: ForestParams,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            model: None,
            training_matrix: None,
            folds: 10,
            forest: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    pub interval: String,
    pub horizon: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<PathBuf>,
    /// Directory of scripted provider fixtures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub providers: Option<PathBuf>,
}

impl Default for MonitorSection {
    fn default() -> Self {
        MonitorSection {
            interval: "10m".into(),
            horizon: "168h".into(),
            targets: None,
            providers: None,
        }
    }
}

impl PipelineConfig {
    /// Forest parameters with the run seed applied.
    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            seed: self.seed,
            ..self.classifier.forest
        }
    }

    pub fn rules(&self) -> Result<Vec<PermutationRule>, ConfigError> {
        PermutationRule::parse_list(&self.squat.rules).map_err(|e| ConfigError::Invalid {
            field: "squat.rules",
            reason: e.to_string(),
        })
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v = vec![&mut self.output_dir, &mut self.registry.path];
        v.extend(self.ct.stream.as_mut());
        v.extend(self.fetch.fixture_root.as_mut());
        v.extend(self.features.accounts.as_mut());
        v.extend(self.features.contract_names.as_mut());
        v.extend(self.classifier.model.as_mut());
        v.extend(self.classifier.training_matrix.as_mut());
        v.extend(self.monitor.targets.as_mut());
        v.extend(self.monitor.providers.as_mut());
        v
    }

    /// Makes every relative path relative to `base` instead.
    pub fn rebase(&mut self, base: &Path) {
        for p in self.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks values and that every input path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inputs: [(&'static str, Option<&PathBuf>); 9] = [
            ("registry.path", Some(&self.registry.path)),
            ("ct.stream", self.ct.stream.as_ref()),
            ("fetch.fixture_root", self.fetch.fixture_root.as_ref()),
            ("features.accounts", self.features.accounts.as_ref()),
            (
                "features.contract_names",
                self.features.contract_names.as_ref(),
            ),
            ("classifier.model", self.classifier.model.as_ref()),
            (
                "classifier.training_matrix",
                self.classifier.training_matrix.as_ref(),
            ),
            ("monitor.targets", self.monitor.targets.as_ref()),
            ("monitor.providers", self.monitor.providers.as_ref()),
        ];
        for (field, p) in inputs {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        field,
                        path: p.display().to_string(),
                    });
                }
            }
        }
        let invalid = |field, reason: &str| {
            Err(ConfigError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if self.parallel == 0 {
            return invalid("parallel", "must be at least 1");
        }
        if self.classifier.model.is_none() && self.classifier.training_matrix.is_none() {
            return invalid("classifier", "set either model or training_matrix");
        }
        if self.fetch.max_bytes == 0 || self.fetch.timeout_secs == 0 {
            return invalid("fetch", "max_bytes and timeout_secs must be positive");
        }
        self.rules()?;
        for (field, v) in [
            ("monitor.interval", &self.monitor.interval),
            ("monitor.horizon", &self.monitor.horizon),
        ] {
            parse_duration(v).map_err(|e| ConfigError::Invalid {
                field,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Parses a config document without touching the filesystem.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Reads, rebases and validates a config file.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}
