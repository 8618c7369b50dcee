//! Experiment configuration: one TOML document per experiment.
//!
//! ```toml
//! schema_version = 1
//! experiment = "optimal-signaling"
//! seed = 7
//! trials = 10000          # optional; each experiment has its own default
//!
//! [params]
//! p = "0.1"               # probabilities are decimal strings
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mockmodel::fixtures::parse_probability;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Report path used by the CLI; not part of the experiment itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            trials: None,
            output: None,
            params: toml::Table::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Canonical text: keys sorted, no output path. Reports echo this.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn trials_or(&self, default: u64) -> u64 {
        self.trials.unwrap_or(default)
    }

    /// Typed parameter block; unknown keys are rejected by `T`.
    pub fn params<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", self.experiment, e.message())))
    }
}

/// A probability written as a decimal string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Prob {
    text: String,
    value: f64,
}

impl Prob {
    pub fn new(text: &str) -> Result<Self> {
        Ok(Prob {
            value: parse_probability(text)?,
            text: text.to_string(),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl TryFrom<String> for Prob {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Prob::new(&s)
    }
}

impl From<Prob> for String {
    fn from(p: Prob) -> String {
        p.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_reject() {
        let text = "schema_version = 1\nexperiment = \"lspn\"\nseed = 3\n[params]\np = \"0.0625\"\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.canonical()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("schema_version = 2\nexperiment = \"x\"\nseed = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("schema_version = 1\nexperiment = \"x\"\nseed = 1\nbogus = 2\n").is_err());
        assert!(Prob::new("0.1e1").is_err());
    }
}
