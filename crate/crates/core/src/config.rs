//! Experiment configuration: one JSON document with `env`, `policy`, `grid`,
//! `costs`, and `output` sections. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::env::DistributionSpec;
use crate::error::{Error, Result};
use crate::policy::PolicySpec;

/// Environment section. Either a single-resource pair
/// (`supply` + `demand`) or a multi-resource block
/// (`supplies` + `demand_by_type` + `weights`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplies: Option<Vec<DistributionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_by_type: Option<Vec<DistributionSpec>>,
    /// Type x resource preference weights (multi-resource envy metric).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

/// Validated view of the environment section.
#[derive(Debug, Clone)]
pub enum ResolvedEnv<'a> {
    Single {
        supply: &'a DistributionSpec,
        demand: &'a DistributionSpec,
    },
    Multi {
        supplies: &'a [DistributionSpec],
        demand_by_type: &'a [DistributionSpec],
        weights: &'a [Vec<f64>],
    },
}

impl EnvConfig {
    pub fn single(supply: DistributionSpec, demand: DistributionSpec) -> Self {
        Self {
            supply: Some(supply),
            demand: Some(demand),
            ..Default::default()
        }
    }

    pub fn multi(
        supplies: Vec<DistributionSpec>,
        demand_by_type: Vec<DistributionSpec>,
        weights: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            supplies: Some(supplies),
            demand_by_type: Some(demand_by_type),
            weights: Some(weights),
            ..Default::default()
        }
    }

    pub fn resolved(&self) -> Result<ResolvedEnv<'_>> {
        match (
            &self.supply,
            &self.demand,
            &self.supplies,
            &self.demand_by_type,
        ) {
            (Some(supply), Some(demand), None, None) => {
                supply.validate()?;
                demand.validate()?;
                Ok(ResolvedEnv::Single { supply, demand })
            }
            (None, None, Some(supplies), Some(demand_by_type)) => {
                for spec in supplies.iter().chain(demand_by_type) {
                    spec.validate()?;
                }
                let weights = self.weights.as_deref().ok_or_else(|| {
                    Error::InvalidConfig(
                        "multi-resource env requires a weights table for the envy metric".into(),
                    )
                })?;
                if weights.len() != demand_by_type.len()
                    || weights.iter().any(|row| row.len() != supplies.len())
                {
                    return Err(Error::DimensionMismatch(
                        "weights table must be (types x resources)".into(),
                    ));
                }
                if supplies.is_empty() || demand_by_type.is_empty() {
                    return Err(Error::InvalidConfig("empty multi-resource env".into()));
                }
                Ok(ResolvedEnv::Multi {
                    supplies,
                    demand_by_type,
                    weights,
                })
            }
            _ => Err(Error::InvalidConfig(
                "env must give either supply+demand or supplies+demand_by_type+weights".into(),
            )),
        }
    }
}

/// Capacity and fairness-target grids. `delta` may be empty, meaning "just
/// the policy's own delta" (zero for static policies).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_m_grid")]
    pub m: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m: default_m_grid(),
            delta: Vec::new(),
        }
    }
}

/// 20 capacities equally spaced in [10, 100].
fn default_m_grid() -> Vec<f64> {
    linspace(10.0, 100.0, 20)
}

/// `n` points equally spaced over `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "one")]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { h: 1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub policy: PolicySpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    /// Starting inventory; defaults to half capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_horizon() -> u64 {
    10_000
}

fn default_replications() -> u64 {
    100
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, policy: PolicySpec) -> Self {
        Self {
            env,
            policy,
            grid: GridConfig::default(),
            costs: CostConfig::default(),
            horizon: default_horizon(),
            replications: default_replications(),
            seed: 0,
            initial_level: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.resolved()?;
        if self.grid.m.is_empty() {
            return Err(Error::InvalidConfig("capacity grid is empty".into()));
        }
        if self.grid.m.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidConfig("capacities must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if !(self.costs.h > 0.0) || !(self.costs.b > 0.0) {
            return Err(Error::InvalidConfig(
                "unit costs h and b must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The fairness grid actually swept: the configured list, or the
    /// policy's own delta as a single cell.
    pub fn delta_grid(&self) -> Vec<f64> {
        if self.grid.delta.is_empty() {
            vec![self.policy.delta().unwrap_or(0.0)]
        } else {
            self.grid.delta.clone()
        }
    }
}
