//! Run configuration: one JSON file that fixes every input of a batch run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::{SimConfig, UsagePattern};
use crate::scenario::ScenarioConfig;
use crate::strategies::StrategyKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub n_scenarios: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub sim: SimConfig,
    pub strategies: Vec<StrategyKind>,
    pub patterns: Vec<UsagePattern>,
}

impl Default for RunConfig {
    /// The desk-scale suite: 12 cells, 5 scenarios, every strategy and pattern.
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed: 42,
            n_scenarios: 5,
            output_dir: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            sim: SimConfig::default(),
            strategies: vec![StrategyKind::None, StrategyKind::Opportunistic, StrategyKind::wla()],
            patterns: UsagePattern::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.n_scenarios == 0 {
            return Err(invalid("n_scenarios must be at least 1"));
        }
        self.scenario.validate()?;
        self.sim.validate()?;
        let mut labels = BTreeSet::new();
        for s in &self.strategies {
            s.validate()?;
            if !labels.insert(s.label()) {
                return Err(invalid(format!("strategy {} listed twice", s.label())));
            }
        }
        let patterns: BTreeSet<_> = self.patterns.iter().collect();
        if patterns.len() != self.patterns.len() {
            return Err(invalid("a usage pattern is listed twice"));
        }
        Ok(())
    }

    /// Parses and validates a config. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::default().to_json().unwrap()).unwrap();
        v["sim"]["arch"]["i_peak"] = 12.0.into();
        let err = RunConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("i_peak"), "{err}");

        let mut cfg = RunConfig::default();
        cfg.scenario.k_neighbors = 5;
        assert!(RunConfig::from_json(&cfg.to_json().unwrap()).is_err());
        let mut cfg = RunConfig::default();
        cfg.schema_version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.strategies.push(StrategyKind::None);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parse_errors_report_the_line() {
        let err = RunConfig::from_json("{\n  \"schema_version\": 1,\n  \"master_seed\": x\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
