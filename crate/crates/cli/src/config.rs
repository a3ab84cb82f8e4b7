use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use marginfer::experiments::SegmentTable;
use marginfer::oracle::MAX_EXPLICIT_ATTRIBUTES;
use marginfer::{EngineConfig, ScalePolicy, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

/// Settings shared by every command; loadable from `--config <file>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub tolerances: Tolerances,
    pub n_limit: usize,
    pub seed: u64,
    pub format: Format,
    pub scale: ScalePolicy,
    /// Alternate seven-segment encodings for `bench-led`.
    pub segments: Option<SegmentTable>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            n_limit: MAX_EXPLICIT_ATTRIBUTES,
            seed: 0,
            format: Format::Json,
            scale: ScalePolicy::Raw,
            segments: None,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: Config = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.tolerances.is_valid() {
            return Err("config: tolerances must be positive".into());
        }
        if self.n_limit > MAX_EXPLICIT_ATTRIBUTES {
            return Err(format!(
                "config: n_limit must be at most {MAX_EXPLICIT_ATTRIBUTES}"
            ));
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            tolerances: self.tolerances,
            n_limit: self.n_limit,
            scale: self.scale,
            ..EngineConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_uses_defaults() {
        let c = Config::from_json(r#"{"seed": 7, "format": "csv"}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.format, Format::Csv);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(Config::from_json(r#"{"n_limit": 21}"#).is_err());
        assert!(Config::from_json(r#"{"tolerances": {"sigma_tol": 0.0}}"#).is_err());
        assert!(Config::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
