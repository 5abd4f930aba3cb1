//! Engine configuration and its TOML file form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::level::ProactivityLevel;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub level: ProactivityLevel,
    /// Few-shot examples shown to the rewriter; 0 means zero-shot.
    pub rewrite_shot_count: usize,
    pub retrieval_k: usize,
    pub max_react_steps: usize,
    pub max_reflect_retries: usize,
    pub temperature: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            level: ProactivityLevel::ALL[0],
            rewrite_shot_count: 3,
            retrieval_k: 3,
            max_react_steps: 6,
            max_reflect_retries: 2,
            temperature: 0.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.retrieval_k == 0 {
            return Err(ConfigError::Invalid("retrieval_k must be at least 1".into()));
        }
        if self.max_react_steps == 0 {
            return Err(ConfigError::Invalid(
                "max_react_steps must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ConfigError::Invalid(
                "temperature must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
