//! Experiment configuration: a single strict JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::QueryMethodSpec;

fn default_cycles() -> usize {
    5
}

fn default_ensemble() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset identifier recorded in results.
    pub dataset: String,
    /// Directory holding the dataset (manifest + payloads).
    pub dataset_dir: PathBuf,
    pub method: QueryMethodSpec,
    /// AL cycles including the starting-budget cycle.
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    /// Patches queried per cycle; the starting budget is one query-size
    /// worth, so the total budget is `query_size * cycles`.
    pub query_size: usize,
    /// Optional cross-check; must equal `query_size * cycles` when given.
    #[serde(default)]
    pub total_budget: Option<usize>,
    pub patch_size: [usize; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    /// Candidate lattice stride; defaults to exact enumeration below
    /// 64^3 and a quarter patch edge beyond.
    #[serde(default)]
    pub candidate_stride: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("parsing experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.cycles < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 cycles (start + one query), got {}",
                self.cycles
            )));
        }
        if self.query_size == 0 {
            return Err(Error::InvalidConfig("query_size must be positive".into()));
        }
        if self.patch_size.contains(&0) {
            return Err(Error::InvalidConfig("patch_size must be positive".into()));
        }
        if let Some(total) = self.total_budget {
            if total != self.query_size * self.cycles {
                return Err(Error::InvalidConfig(format!(
                    "total_budget {total} != query_size {} * cycles {}",
                    self.query_size, self.cycles
                )));
            }
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble_size must be positive".into()));
        }
        if self.ensemble_size < 2 {
            if let Some(crate::strategies::UncertaintyKind::Bald) = self.method.base() {
                return Err(Error::InvalidConfig(
                    "BALD-family methods need an ensemble of at least 2".into(),
                ));
            }
        }
        if self.candidate_stride == Some(0) {
            return Err(Error::InvalidConfig("candidate_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Total annotation budget implied by the protocol.
    pub fn budget_total(&self) -> usize {
        self.query_size * self.cycles
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "dataset": "synth_default",
        "dataset_dir": "data/synth_default",
        "method": {"clasp": {"base": "pe"}},
        "cycles": 5,
        "query_size": 30,
        "patch_size": [12, 12, 12],
        "seed": 0
    }"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::from_json(GOOD).unwrap();
        assert_eq!(c.cycles, 5);
        assert_eq!(c.ensemble_size, 5);
        assert_eq!(c.budget_total(), 150);
        assert_eq!(c.method.id(), "clasp_pe");
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = GOOD.replace("\"seed\": 0", "\"seed\": 0, \"typo_key\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad_method = GOOD.replace(
            "{\"clasp\": {\"base\": \"pe\"}}",
            "{\"clasp\": {\"base\": \"pe\", \"alpa\": 0.5}}",
        );
        assert!(ExperimentConfig::from_json(&bad_method).is_err());
    }

    #[test]
    fn budget_cross_check() {
        let ok = GOOD.replace("\"cycles\": 5", "\"cycles\": 5, \"total_budget\": 150");
        assert!(ExperimentConfig::from_json(&ok).is_ok());
        let bad = GOOD.replace("\"cycles\": 5", "\"cycles\": 5, \"total_budget\": 140");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn bald_needs_ensemble() {
        let bad = GOOD
            .replace("{\"clasp\": {\"base\": \"pe\"}}", "{\"topk\": {\"base\": \"bald\"}}")
            .replace("\"seed\": 0", "\"seed\": 0, \"ensemble_size\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }
}
