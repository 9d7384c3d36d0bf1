//! Line-based `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique and
//! must be known; values are parsed per key.

use std::fmt::Write as _;

use thiserror::Error;
use toxpipe_ensemble::{EnsembleParams, FeatureSubsample, TieBreak};
use toxpipe_nn::{NetworkConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    MalformedLine(usize),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Splits text into `(line number, key, value)` entries.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::MalformedLine(line))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::MalformedLine(line));
        }
        if out.iter().any(|(_, k, _)| k == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        out.push((line, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub ensemble: EnsembleParams,
    /// Augmented renderings per molecule for the feature-stability score.
    pub augment_runs: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Weight of the feature-stability score in the global confidence.
    pub confidence_weight: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            network: NetworkConfig::desk(),
            train: TrainConfig::default(),
            ensemble: EnsembleParams::default(),
            augment_runs: 8,
            split: [0.8, 0.1, 0.1],
            confidence_weight: 0.5,
            seed: 0,
            threads: 0,
        }
    }
}

fn list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

fn array3(v: &str) -> Option<[f64; 3]> {
    let l: Vec<f64> = list(v)?;
    l.try_into().ok()
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (line, key, value) in parse_pairs(text)? {
            cfg.set(&key, &value).map_err(|e| match e {
                SetError::Unknown => ConfigError::UnknownKey { line, key: key.clone() },
                SetError::Bad(reason) => ConfigError::BadValue {
                    line,
                    key: key.clone(),
                    reason,
                },
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, SetError> {
            v.parse().map_err(|_| SetError::Bad(format!("cannot parse `{v}`")))
        }
        let bad = |what: &str| SetError::Bad(what.to_string());
        let net = &mut self.network;
        let ens = &mut self.ensemble;
        match key {
            "image_size" => net.input_size = num(value)?,
            "block_layers" => net.block_layers = list(value).ok_or_else(|| bad("expected comma-separated integers"))?,
            "growth_rate" => net.growth_rate = num(value)?,
            "stem_channels" => net.stem_channels = num(value)?,
            "compression" => net.compression = num(value)?,
            "bottleneck_factor" => net.bottleneck_factor = num(value)?,
            "epochs" => self.train.epochs = num(value)?,
            "batch_size" => self.train.batch_size = num(value)?,
            "learning_rate" => self.train.learning_rate = num(value)?,
            "momentum" => self.train.momentum = num(value)?,
            "svm_lambda" => ens.svm.lambda = num(value)?,
            "svm_epochs" => ens.svm.epochs = num(value)?,
            "svm_eta0" => ens.svm.eta0 = num(value)?,
            "rf_trees" => ens.forest.n_trees = num(value)?,
            "rf_max_depth" => {
                ens.forest.max_depth = match value {
                    "none" => None,
                    v => Some(num(v)?),
                }
            }
            "rf_max_features" => {
                ens.forest.max_features = match value {
                    "sqrt" => FeatureSubsample::Sqrt,
                    "all" => FeatureSubsample::All,
                    v => FeatureSubsample::Count(num(v)?),
                }
            }
            "rf_bootstrap" => ens.forest.bootstrap = num(value)?,
            "rf_max_bins" => ens.forest.max_bins = num(value)?,
            "gbm_rounds" => ens.gbm.n_rounds = num(value)?,
            "gbm_max_depth" => ens.gbm.max_depth = num(value)?,
            "gbm_learning_rate" => ens.gbm.learning_rate = num(value)?,
            "gbm_lambda" => ens.gbm.lambda = num(value)?,
            "gbm_max_bins" => ens.gbm.max_bins = num(value)?,
            "alpha" => ens.alpha = array3(value).ok_or_else(|| bad("expected three comma-separated numbers"))?,
            "tie_break" => {
                ens.tie = match value {
                    "inactive" => TieBreak::Inactive,
                    "active" => TieBreak::Active,
                    _ => return Err(bad("expected `inactive` or `active`")),
                }
            }
            "augment_runs" => self.augment_runs = num(value)?,
            "split" => self.split = array3(value).ok_or_else(|| bad("expected three comma-separated fractions"))?,
            "confidence_weight" => self.confidence_weight = num(value)?,
            "seed" => self.seed = num(value)?,
            "threads" => self.threads = num(value)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.network.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.network.num_outputs != crate::assays::N_ASSAYS {
            return invalid("the network head must have one output per assay");
        }
        if self.train.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate >= 0.0) {
            return invalid("learning_rate must be a non-negative number");
        }
        if self.augment_runs < 2 {
            return invalid("augment_runs must be at least 2");
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("split fractions must be in [0, 1] and sum to 1");
        }
        let a = &self.ensemble.alpha;
        if a.iter().any(|v| !(*v >= 0.0)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("alpha weights must be non-negative and sum to 1");
        }
        if !(0.0..=1.0).contains(&self.confidence_weight) {
            return invalid("confidence_weight must be in [0, 1]");
        }
        if self.ensemble.forest.n_trees == 0 {
            return invalid("rf_trees must be positive");
        }
        Ok(())
    }

    /// Every key in a fixed order; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let net = &self.network;
        let ens = &self.ensemble;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("image_size", net.input_size.to_string());
        kv("block_layers", fmt_list(&net.block_layers));
        kv("growth_rate", net.growth_rate.to_string());
        kv("stem_channels", net.stem_channels.to_string());
        kv("compression", net.compression.to_string());
        kv("bottleneck_factor", net.bottleneck_factor.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("learning_rate", self.train.learning_rate.to_string());
        kv("momentum", self.train.momentum.to_string());
        kv("svm_lambda", ens.svm.lambda.to_string());
        kv("svm_epochs", ens.svm.epochs.to_string());
        kv("svm_eta0", ens.svm.eta0.to_string());
        kv("rf_trees", ens.forest.n_trees.to_string());
        kv("rf_max_depth", ens.forest.max_depth.map_or("none".into(), |d| d.to_string()));
        kv(
            "rf_max_features",
            match ens.forest.max_features {
                FeatureSubsample::Sqrt => "sqrt".into(),
                FeatureSubsample::All => "all".into(),
                FeatureSubsample::Count(n) => n.to_string(),
            },
        );
        kv("rf_bootstrap", ens.forest.bootstrap.to_string());
        kv("rf_max_bins", ens.forest.max_bins.to_string());
        kv("gbm_rounds", ens.gbm.n_rounds.to_string());
        kv("gbm_max_depth", ens.gbm.max_depth.to_string());
        kv("gbm_learning_rate", ens.gbm.learning_rate.to_string());
        kv("gbm_lambda", ens.gbm.lambda.to_string());
        kv("gbm_max_bins", ens.gbm.max_bins.to_string());
        kv("alpha", fmt_list(&ens.alpha));
        kv(
            "tie_break",
            match ens.tie {
                TieBreak::Inactive => "inactive".into(),
                TieBreak::Active => "active".into(),
            },
        );
        kv("augment_runs", self.augment_runs.to_string());
        kv("split", fmt_list(&self.split));
        kv("confidence_weight", self.confidence_weight.to_string());
        kv("seed", self.seed.to_string());
        kv("threads", self.threads.to_string());
        s
    }
}

enum SetError {
    Unknown,
    Bad(String),
}
