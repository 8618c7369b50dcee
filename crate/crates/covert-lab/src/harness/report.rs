//! Reports: JSON lines (config echo, one line per metric, summary) and a
//! plain-text summary table. Runtime is kept out of the JSON lines so the
//! bytes depend only on config, seed and artifact version.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::stats::Interval;
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub id: String,
    pub value: f64,
    #[serde(default)]
    pub ci: Option<Interval>,
    /// The criterion the value is held to, in words.
    pub bound: String,
    pub pass: bool,
}

impl Metric {
    pub fn new(id: &str, value: f64, bound: impl Into<String>, pass: bool) -> Self {
        Metric {
            id: id.to_string(),
            value,
            ci: None,
            bound: bound.into(),
            pass,
        }
    }

    pub fn with_ci(mut self, ci: Interval) -> Self {
        self.ci = Some(ci);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub config: ExperimentConfig,
    pub criterion: Option<u8>,
    pub metrics: Vec<Metric>,
    pub runtime: Duration,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Config {
        artifact_version: String,
        experiment: String,
        seed: u64,
        config: String,
    },
    Metric(Metric),
    Summary {
        experiment: String,
        criterion: Option<u8>,
        metrics: usize,
        failed: usize,
        passed: bool,
    },
}

impl Report {
    /// Every metric passes.
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn metric(&self, id: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.id == id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("report line serializes"));
            out.push('\n');
        };
        push(&Line::Config {
            artifact_version: ARTIFACT_VERSION.to_string(),
            experiment: self.config.experiment.clone(),
            seed: self.config.seed,
            config: self.config.canonical(),
        });
        for m in &self.metrics {
            push(&Line::Metric(m.clone()));
        }
        push(&Line::Summary {
            experiment: self.config.experiment.clone(),
            criterion: self.criterion,
            metrics: self.metrics.len(),
            failed: self.metrics.iter().filter(|m| !m.pass).count(),
            passed: self.passed(),
        });
        out
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let crit = self.criterion.map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "{} (criterion {crit}, seed {}, {:.1}s): {}",
            self.config.experiment,
            self.config.seed,
            self.runtime.as_secs_f64(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for m in &self.metrics {
            let ci = m.ci.map_or(String::new(), |c| format!(" [{:.6}, {:.6}]", c.lo, c.hi));
            let _ = writeln!(
                s,
                "  {:<4} {:<44} {:>14.6e}{ci}  ({})",
                if m.pass { "ok" } else { "FAIL" },
                m.id,
                m.value,
                m.bound
            );
        }
        s
    }
}

/// The config echoed in the first line of a report.
pub fn config_of_report(text: &str) -> Result<ExperimentConfig> {
    let first = text.lines().next().ok_or_else(|| Error::Config("empty report".into()))?;
    match serde_json::from_str::<Line>(first).map_err(|e| Error::Config(e.to_string()))? {
        Line::Config {
            artifact_version,
            config,
            ..
        } => {
            if artifact_version != ARTIFACT_VERSION {
                return Err(Error::Config(format!(
                    "report from artifact version {artifact_version}, this is {ARTIFACT_VERSION}"
                )));
            }
            ExperimentConfig::from_toml(&config)
        }
        _ => Err(Error::Config("report does not start with a config line".into())),
    }
}
