//! Tunable knobs, loadable from a JSON config file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::PositionWeights;
use crate::imagery::{Field, DEFAULT_LABELS_PER_IMAGE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// `[y][x]` array of `[alpha, beta]`, row 0 being the bottom row.
    pub position_weights: PositionWeights,
    pub new_query_size: usize,
    pub top_n_words: usize,
    pub labels_per_image: usize,
    pub fields: BTreeSet<Field>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            position_weights: PositionWeights::default(),
            new_query_size: 2,
            top_n_words: 20,
            labels_per_image: DEFAULT_LABELS_PER_IMAGE,
            fields: Field::all(),
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.new_query_size == 0 {
            return Err(ConfigError::Invalid("new_query_size must be >= 1".into()));
        }
        if self.top_n_words < self.new_query_size {
            return Err(ConfigError::Invalid(
                "top_n_words must be >= new_query_size".into(),
            ));
        }
        if self.labels_per_image == 0 {
            return Err(ConfigError::Invalid("labels_per_image must be >= 1".into()));
        }
        if self.fields.is_empty() {
            return Err(ConfigError::Invalid("fields must not be empty".into()));
        }
        Ok(())
    }
}
