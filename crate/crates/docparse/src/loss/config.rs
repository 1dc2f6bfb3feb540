//! Plain-text key-value loss configuration.
//!
//! Format: one `key = value` per line, `#` starts a comment, blank lines
//! ignored. Unknown or duplicate keys are errors so typos never silently
//! fall back to defaults.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue { line: usize, key: String, value: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
}

/// Loss hyperparameters plus per-task mixing weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossConfig {
    pub kernel_size: usize,
    pub sigma: f64,
    pub normalized: bool,
    pub epsilon: f64,
    /// Coordinate-token range; None defers to the caller's vocabulary
    /// layout.
    pub range_start: Option<u32>,
    pub range_end: Option<u32>,
    pub weight_detection: f64,
    pub weight_text: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kernel_size: 5,
            sigma: 1.0,
            normalized: true,
            epsilon: 1e-12,
            range_start: None,
            range_end: None,
            weight_detection: 1.0,
            weight_text: 1.0,
        }
    }
}

impl LossConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::BadLine { line, text: body.to_string() });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            seen.push(key.to_string());
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "kernel_size" => config.kernel_size = value.parse().map_err(|_| bad())?,
                "sigma" => config.sigma = value.parse().map_err(|_| bad())?,
                "normalized" => {
                    config.normalized = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad()),
                    }
                }
                "epsilon" => config.epsilon = value.parse().map_err(|_| bad())?,
                "range_start" => config.range_start = Some(value.parse().map_err(|_| bad())?),
                "range_end" => config.range_end = Some(value.parse().map_err(|_| bad())?),
                "weight_detection" => config.weight_detection = value.parse().map_err(|_| bad())?,
                "weight_text" => config.weight_text = value.parse().map_err(|_| bad())?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
            }
        }
        Ok(config)
    }
}
