//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! q_x = 0.5          # or p_x = [0.2, 0.5, 0.3]
//! p_e_rate = 0.5     # or p_e = [0.5, 0.5]
//! capacity = 1       # or "inf"
//! p_hat = 1
//!
//! [sim]
//! n = 100000
//! seeds = 4
//!
//! [solver]
//! tol = 1e-9
//!
//! [policy]
//! kind = "battery_independent"
//! p_v = 1.0
//!
//! [sweep]
//! q_x = 0.5
//! p_e_grid = [0.1, 0.5, 0.9]
//! capacities = [1, 2, 5]
//! ```
//!
//! Command-line flags override values read from the file.

use std::path::Path;

use serde::Deserialize;
use smartleak_core::policies::Policy;
use smartleak_core::{Capacity, GridModel, Pmf};

use crate::error::{Result, WorkbenchError};

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub policy: Option<Policy>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub sgd: SgdConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CapacityValue {
    Finite(u64),
    Named(String),
}

impl CapacityValue {
    pub fn resolve(&self) -> Result<Capacity> {
        match self {
            CapacityValue::Finite(b) => Ok(Capacity::Finite(*b)),
            CapacityValue::Named(s) if s == "inf" || s == "infinite" => Ok(Capacity::Infinite),
            CapacityValue::Named(s) => Err(WorkbenchError::Config(format!("unknown capacity {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub p_x: Option<Vec<f64>>,
    pub q_x: Option<f64>,
    pub p_e: Option<Vec<f64>>,
    pub p_e_rate: Option<f64>,
    pub capacity: Option<CapacityValue>,
    pub p_hat: Option<u64>,
}

fn pick(name: &str, list: &Option<Vec<f64>>, rate: Option<f64>) -> Result<Pmf> {
    match (list, rate) {
        (Some(p), None) => Pmf::new(p.clone()).map_err(|e| WorkbenchError::Config(format!("{name}: {e}"))),
        (None, Some(r)) => Pmf::bernoulli(r).map_err(|e| WorkbenchError::Config(format!("{name}: {e}"))),
        (Some(_), Some(_)) => Err(WorkbenchError::Config(format!("give either {name} or its binary rate, not both"))),
        (None, None) => Err(WorkbenchError::Config(format!("missing {name}"))),
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<GridModel> {
        let p_x = pick("p_x", &self.p_x, self.q_x)?;
        let p_e = pick("p_e", &self.p_e, self.p_e_rate)?;
        let capacity = self
            .capacity
            .as_ref()
            .map_or(Ok(Capacity::Infinite), CapacityValue::resolve)?;
        let model = GridModel::new(p_x, p_e, capacity, self.p_hat.unwrap_or(1))
            .map_err(|e| WorkbenchError::Config(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: u64,
    pub seeds: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n: 1_000_000, seeds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub q_x: f64,
    pub p_e_grid: Vec<f64>,
    pub capacities: Vec<u64>,
    /// Grid step of the masking-probability scan.
    pub pv_step: f64,
    /// Grid step of the three-level search.
    pub three_level_step: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            q_x: 0.5,
            p_e_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            capacities: Vec::new(),
            pv_step: 0.1,
            three_level_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub probes: usize,
    pub radius: f64,
    pub learning_rate: f64,
    pub threshold: f64,
    pub max_iter: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        let d = smartleak_core::policy_opt::SgdOptions::default();
        Self {
            probes: d.probes,
            radius: d.radius,
            learning_rate: d.learning_rate,
            threshold: d.threshold,
            max_iter: d.max_iter,
        }
    }
}

impl SgdConfig {
    pub fn options(&self) -> smartleak_core::policy_opt::SgdOptions {
        smartleak_core::policy_opt::SgdOptions {
            probes: self.probes,
            radius: self.radius,
            learning_rate: self.learning_rate,
            threshold: self.threshold,
            max_iter: self.max_iter,
            seed: 0,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| WorkbenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorkbenchError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model(&self) -> Result<GridModel> {
        self.model
            .as_ref()
            .ok_or_else(|| WorkbenchError::Config("missing [model] section".into()))?
            .build()
    }

    pub fn policy(&self) -> Result<Policy> {
        self.policy
            .clone()
            .ok_or_else(|| WorkbenchError::Config("missing [policy] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let cfg = Config::parse(
            r#"
            [model]
            q_x = 0.5
            p_e_rate = 0.5
            capacity = 1
            p_hat = 1

            [sim]
            n = 1000
            seeds = 2

            [policy]
            kind = "battery_conditioned"
            p_v = [0.5, 1.0]
            "#,
        )
        .unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.capacity, Capacity::Finite(1));
        assert_eq!(cfg.sim.n, 1000);
        assert_eq!(cfg.solver.tol, 1e-9);
        assert_eq!(cfg.policy().unwrap(), Policy::BatteryConditioned { p_v: vec![0.5, 1.0] });
    }

    #[test]
    fn infinite_capacity_and_explicit_pmfs() {
        let cfg = Config::parse(
            r#"
            [model]
            p_x = [0.2, 0.3, 0.5]
            p_e = [0.5, 0.5]
            capacity = "inf"
            "#,
        )
        .unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.capacity, Capacity::Infinite);
        assert_eq!(model.x_size(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("[model]\nq_x = 0.5\nbogus = 1\n").is_err());
        let both = Config::parse("[model]\nq_x = 0.5\np_x = [0.5, 0.5]\np_e_rate = 0.1\n").unwrap();
        assert!(matches!(both.model(), Err(WorkbenchError::Config(_))));
        let cap = Config::parse("[model]\nq_x = 0.5\np_e_rate = 0.1\ncapacity = \"big\"\n").unwrap();
        assert!(cap.model().is_err());
        let sum = Config::parse("[model]\np_x = [0.5, 0.6]\np_e_rate = 0.1\n").unwrap();
        assert!(sum.model().is_err());
        assert!(Config::default().model().is_err());
    }
}
