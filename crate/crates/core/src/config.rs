//! Experiment manifests: one TOML file with `[scenario]`, `[reward]`,
//! `[training]` and `[evaluation]` sections. Every section and field is
//! optional; omitted values take their defaults.

use crate::env::Scenario;
use crate::eval::{DEFAULT_BINS, DEFAULT_WIDEN};
use crate::learner::TrainConfig;
use crate::reward::{RewardSpace, RewardSpaceSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Settings of `eval`, `compare`, `sweep` and `export-curves`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Games per evaluated configuration.
    pub games: usize,
    pub sweep_games: usize,
    pub bins: usize,
    /// Interval widening factor of the continuum sweep.
    pub widen: f64,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            games: 500,
            sweep_games: 20_000,
            bins: DEFAULT_BINS,
            widen: DEFAULT_WIDEN,
            seed: 0,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |field: &str, message: &str| {
            Err(ExperimentError::Invalid {
                field: format!("evaluation.{field}"),
                message: message.to_string(),
            })
        };
        if self.games == 0 {
            return invalid("games", "must be at least 1");
        }
        if self.bins == 0 {
            return invalid("bins", "must be at least 1");
        }
        if !(self.widen.is_finite() && self.widen > 0.0) {
            return invalid("widen", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ExperimentError {
    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ExperimentError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub reward: RewardSpace,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
}

/// Parsed but unvalidated file contents; reward intervals stay raw so that
/// their errors can name the coefficient.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawExperiment {
    scenario: Scenario,
    reward: RewardSpaceSpec,
    training: TrainConfig,
    evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        let raw: RawExperiment = toml::from_str(text)?;
        let reward = RewardSpace::try_from(raw.reward).map_err(|e| ExperimentError::Invalid {
            field: format!("reward.{}", e.coefficient),
            message: e.source.to_string(),
        })?;
        let cfg = ExperimentConfig {
            scenario: raw.scenario,
            reward,
            training: raw.training,
            evaluation: raw.evaluation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.scenario.validate().map_err(|e| ExperimentError::Invalid {
            field: format!("scenario.{}", e.field),
            message: e.message,
        })?;
        self.training.validate().map_err(|e| ExperimentError::Invalid {
            field: format!("training.{}", e.field),
            message: e.message,
        })?;
        self.evaluation.validate()
    }
}
