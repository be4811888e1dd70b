//! Allocation rules behind one time-homogeneous interface: map the current
//! inventory level (and the realized budget/demand where the rule uses them)
//! to per-agent allocations.

use serde::{Deserialize, Serialize};

use crate::env::{cycle_reference, DistributionSpec};
use crate::error::{Error, Result};

/// Serialized policy description, e.g. `{"kind":"bang_bang","delta":0.3}`.
///
/// Reference means default to the environment's nominal means and can be
/// overridden per policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Constant allocation `alpha` regardless of state.
    Static {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Static at the balanced point `mu_b / mu_n`.
    Proportional {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_b: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_n: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Two-point rule around `mu_b / mu_n`: under-allocate by `delta/2` below
    /// half capacity, over-allocate by `delta/2` at or above it.
    BangBang {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_b: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_n: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Bang-bang with the reference replaced by cumulative supply over
    /// cumulative demand across one cycle of the periodic means.
    TimeVaryingBangBang {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Independent bang-bang per resource on virtual stores of cap `M/K`.
    MultiBangBang {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_b: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_n: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Bang-bang centered on a fluid Eisenberg-Gale allocation table instead
    /// of the flat `mu_b / mu_n` baseline.
    EgBangBang {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eg_allocations: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
    /// Allocate the whole post-donation inventory: `(S + B) / N`.
    FullDepletion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_max: Option<f64>,
    },
}

impl PolicySpec {
    pub fn delta(&self) -> Option<f64> {
        match self {
            Self::BangBang { delta, .. }
            | Self::TimeVaryingBangBang { delta, .. }
            | Self::MultiBangBang { delta, .. }
            | Self::EgBangBang { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    /// Copy of the spec with `delta` substituted (used by grid sweeps). For
    /// policies without a delta parameter any nonzero value is an error.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut spec = self.clone();
        match &mut spec {
            Self::BangBang { delta: d, .. }
            | Self::TimeVaryingBangBang { delta: d, .. }
            | Self::MultiBangBang { delta: d, .. }
            | Self::EgBangBang { delta: d, .. } => *d = delta,
            _ if delta != 0.0 => {
                return Err(Error::InvalidPolicy(format!(
                    "policy has no fairness parameter but the grid asked for delta = {delta}"
                )))
            }
            _ => {}
        }
        Ok(spec)
    }

    fn a_max(&self) -> f64 {
        let opt = match self {
            Self::Static { a_max, .. }
            | Self::Proportional { a_max, .. }
            | Self::BangBang { a_max, .. }
            | Self::TimeVaryingBangBang { a_max, .. }
            | Self::MultiBangBang { a_max, .. }
            | Self::EgBangBang { a_max, .. }
            | Self::FullDepletion { a_max, .. } => a_max,
        };
        opt.unwrap_or(f64::INFINITY)
    }
}

/// A policy decision: the allocation, plus whether it had to be clamped into
/// `[0, a_max]` (reported in the run summary as a warning count).
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub allocation: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDecision {
    /// type x resource per-agent allocations
    pub allocations: Vec<Vec<f64>>,
    pub clamps: u64,
}

#[derive(Debug, Clone)]
enum Rule {
    Static {
        alpha: f64,
    },
    BangBang {
        reference: f64,
        delta: f64,
        threshold: f64,
    },
    MultiBangBang {
        references: Vec<f64>,
        delta: f64,
        thresholds: Vec<f64>,
        types: usize,
    },
    EgBangBang {
        table: Vec<Vec<f64>>,
        delta: f64,
        thresholds: Vec<f64>,
    },
    FullDepletion,
}

/// A validated policy bound to a concrete capacity and environment. Immutable
/// after construction; `decide*` calls are pure.
#[derive(Debug, Clone)]
pub struct Policy {
    rule: Rule,
    a_max: f64,
}

/// Environment facts a policy needs at build time.
#[derive(Debug, Clone)]
pub enum PolicyEnv<'a> {
    Single {
        supply: &'a DistributionSpec,
        demand: &'a DistributionSpec,
    },
    Multi {
        supplies: &'a [DistributionSpec],
        demand_by_type: &'a [DistributionSpec],
    },
}

impl PolicyEnv<'_> {
    fn single(&self) -> Result<(&DistributionSpec, &DistributionSpec)> {
        match self {
            PolicyEnv::Single { supply, demand } => Ok((supply, demand)),
            PolicyEnv::Multi { .. } => Err(Error::InvalidPolicy(
                "single-resource policy used with a multi-resource environment".into(),
            )),
        }
    }

    fn multi(&self) -> Result<(&[DistributionSpec], &[DistributionSpec])> {
        match self {
            PolicyEnv::Multi {
                supplies,
                demand_by_type,
            } => Ok((supplies, demand_by_type)),
            PolicyEnv::Single { .. } => Err(Error::InvalidPolicy(
                "multi-resource policy used with a single-resource environment".into(),
            )),
        }
    }
}

fn check_bang_bang_range(delta: f64, reference: f64, what: &str) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidPolicy(format!(
            "{what}: delta must be nonnegative, got {delta}"
        )));
    }
    if delta >= 2.0 * reference {
        return Err(Error::InvalidPolicy(format!(
            "{what}: delta = {delta} out of range [0, {}) for reference {reference}",
            2.0 * reference
        )));
    }
    Ok(())
}

impl Policy {
    /// Resolve a spec against an environment and a capacity.
    pub fn build(spec: &PolicySpec, env: &PolicyEnv, capacity: f64) -> Result<Self> {
        let a_max = spec.a_max();
        if !(a_max > 0.0) {
            return Err(Error::InvalidPolicy(format!(
                "a_max must be positive, got {a_max}"
            )));
        }
        let rule = match spec {
            PolicySpec::Static { alpha, .. } => {
                if !(0.0..=a_max).contains(alpha) {
                    return Err(Error::InvalidPolicy(format!(
                        "static alpha = {alpha} outside [0, {a_max}]"
                    )));
                }
                Rule::Static { alpha: *alpha }
            }
            PolicySpec::Proportional { mu_b, mu_n, .. } => {
                let (supply, demand) = env.single()?;
                let mb = mu_b.unwrap_or_else(|| supply.nominal_mean());
                let mn = mu_n.unwrap_or_else(|| demand.nominal_mean());
                if !(mn > 0.0) {
                    return Err(Error::InvalidPolicy(format!(
                        "proportional: demand mean must be positive, got {mn}"
                    )));
                }
                Rule::Static { alpha: mb / mn }
            }
            PolicySpec::BangBang { delta, mu_b, mu_n, .. } => {
                let (supply, demand) = env.single()?;
                let mb = mu_b.unwrap_or_else(|| supply.nominal_mean());
                let mn = mu_n.unwrap_or_else(|| demand.nominal_mean());
                if !(mn > 0.0) {
                    return Err(Error::InvalidPolicy(format!(
                        "bang_bang: demand mean must be positive, got {mn}"
                    )));
                }
                let reference = mb / mn;
                check_bang_bang_range(*delta, reference, "bang_bang")?;
                Rule::BangBang {
                    reference,
                    delta: *delta,
                    threshold: capacity / 2.0,
                }
            }
            PolicySpec::TimeVaryingBangBang { delta, .. } => {
                let (supply, demand) = env.single()?;
                let mut supply_schedule = supply.schedule_or_nominal();
                let mut demand_schedule = demand.schedule_or_nominal();
                // A length-1 schedule is a constant; stretch it to match.
                let cycle = supply_schedule.len().max(demand_schedule.len());
                if supply_schedule.len() == 1 {
                    supply_schedule = vec![supply_schedule[0]; cycle];
                }
                if demand_schedule.len() == 1 {
                    demand_schedule = vec![demand_schedule[0]; cycle];
                }
                let reference = cycle_reference(&supply_schedule, &demand_schedule)?;
                check_bang_bang_range(*delta, reference, "time_varying_bang_bang")?;
                Rule::BangBang {
                    reference,
                    delta: *delta,
                    threshold: capacity / 2.0,
                }
            }
            PolicySpec::MultiBangBang { delta, mu_b, mu_n, .. } => {
                let (supplies, demand_by_type) = env.multi()?;
                let references = Self::multi_references(supplies, demand_by_type, mu_b, mu_n)?;
                let min_ref = references.iter().cloned().fold(f64::INFINITY, f64::min);
                check_bang_bang_range(*delta, min_ref, "multi_bang_bang")?;
                let k = references.len();
                let per_store_cap = capacity / k as f64;
                Rule::MultiBangBang {
                    references,
                    delta: *delta,
                    thresholds: vec![per_store_cap / 2.0; k],
                    types: demand_by_type.len(),
                }
            }
            PolicySpec::EgBangBang {
                delta,
                eg_allocations,
                ..
            } => {
                let (supplies, demand_by_type) = env.multi()?;
                let table = eg_allocations.clone().ok_or_else(|| {
                    Error::InvalidPolicy(
                        "eg_bang_bang requires an eg_allocations table (solve the fluid \
                         Eisenberg-Gale program first)"
                            .into(),
                    )
                })?;
                if table.len() != demand_by_type.len()
                    || table.iter().any(|row| row.len() != supplies.len())
                {
                    return Err(Error::DimensionMismatch(
                        "eg_allocations table does not match (types x resources)".into(),
                    ));
                }
                if *delta < 0.0 {
                    return Err(Error::InvalidPolicy("delta must be nonnegative".into()));
                }
                let k = supplies.len();
                let per_store_cap = capacity / k as f64;
                Rule::EgBangBang {
                    table,
                    delta: *delta,
                    thresholds: vec![per_store_cap / 2.0; k],
                }
            }
            PolicySpec::FullDepletion { .. } => Rule::FullDepletion,
        };
        Ok(Self { rule, a_max })
    }

    fn multi_references(
        supplies: &[DistributionSpec],
        demand_by_type: &[DistributionSpec],
        mu_b: &Option<Vec<f64>>,
        mu_n: &Option<f64>,
    ) -> Result<Vec<f64>> {
        let mb: Vec<f64> = match mu_b {
            Some(v) => {
                if v.len() != supplies.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} reference supply means for {} resources",
                        v.len(),
                        supplies.len()
                    )));
                }
                v.clone()
            }
            None => supplies.iter().map(|s| s.nominal_mean()).collect(),
        };
        let mn = mu_n
            .unwrap_or_else(|| demand_by_type.iter().map(|d| d.nominal_mean()).sum::<f64>());
        if !(mn > 0.0) {
            return Err(Error::InvalidPolicy(format!(
                "multi_bang_bang: total demand mean must be positive, got {mn}"
            )));
        }
        Ok(mb.iter().map(|b| b / mn).collect())
    }

    fn clamp(&self, raw: f64) -> Decision {
        let allocation = raw.clamp(0.0, self.a_max);
        Decision {
            allocation,
            clamped: allocation != raw,
        }
    }

    /// Single-resource decision from the pre-round level `S_{t-1}` and the
    /// realized budget and demand.
    pub fn decide(&self, level: f64, budget: f64, demand: f64) -> Decision {
        match &self.rule {
            Rule::Static { alpha } => self.clamp(*alpha),
            Rule::BangBang {
                reference,
                delta,
                threshold,
            } => {
                // Tie at the threshold takes the high-allocation branch.
                let raw = if level < *threshold {
                    reference - delta / 2.0
                } else {
                    reference + delta / 2.0
                };
                self.clamp(raw)
            }
            Rule::FullDepletion => {
                if demand > 0.0 {
                    let mut raw = (level + budget) / demand;
                    // Nudge the quotient down until the post-update level is
                    // nonnegative under the store's own rounding, so
                    // depleting never overdraws by an ulp.
                    while raw > 0.0 && level + (budget - raw * demand) < 0.0 {
                        raw = f64::from_bits(raw.to_bits() - 1);
                    }
                    self.clamp(raw)
                } else {
                    Decision {
                        allocation: 0.0,
                        clamped: false,
                    }
                }
            }
            Rule::MultiBangBang { .. } | Rule::EgBangBang { .. } => Decision {
                // Multi-resource rules must go through decide_multi.
                allocation: f64::NAN,
                clamped: false,
            },
        }
    }

    /// Multi-resource decision: per-agent type x resource allocations from
    /// the pre-round virtual-store levels.
    pub fn decide_multi(&self, levels: &[f64]) -> Result<MultiDecision> {
        match &self.rule {
            Rule::MultiBangBang {
                references,
                delta,
                thresholds,
                types,
            } => {
                if levels.len() != references.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} levels for {} resources",
                        levels.len(),
                        references.len()
                    )));
                }
                let mut clamps = 0;
                let row: Vec<f64> = references
                    .iter()
                    .zip(thresholds)
                    .zip(levels)
                    .map(|((reference, threshold), level)| {
                        let raw = if *level < *threshold {
                            reference - delta / 2.0
                        } else {
                            reference + delta / 2.0
                        };
                        let d = self.clamp(raw);
                        if d.clamped {
                            clamps += 1;
                        }
                        d.allocation
                    })
                    .collect();
                Ok(MultiDecision {
                    allocations: vec![row; *types],
                    clamps,
                })
            }
            Rule::EgBangBang {
                table,
                delta,
                thresholds,
            } => {
                if levels.len() != thresholds.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} levels for {} resources",
                        levels.len(),
                        thresholds.len()
                    )));
                }
                let mut clamps = 0;
                let allocations = table
                    .iter()
                    .map(|row| {
                        row.iter()
                            .zip(thresholds)
                            .zip(levels)
                            .map(|((base, threshold), level)| {
                                let raw = if *level < *threshold {
                                    base - delta / 2.0
                                } else {
                                    base + delta / 2.0
                                };
                                let d = self.clamp(raw);
                                if d.clamped {
                                    clamps += 1;
                                }
                                d.allocation
                            })
                            .collect()
                    })
                    .collect();
                Ok(MultiDecision {
                    allocations,
                    clamps,
                })
            }
            _ => Err(Error::InvalidPolicy(
                "decide_multi called on a single-resource policy".into(),
            )),
        }
    }

    pub fn is_multi(&self) -> bool {
        matches!(
            self.rule,
            Rule::MultiBangBang { .. } | Rule::EgBangBang { .. }
        )
    }

    /// The allocation this policy makes at a boundary level (used by the
    /// sandwich-bound checks, which need the fixed boundary allocation).
    pub fn boundary_allocation(&self, at_upper: bool, capacity: f64) -> Option<f64> {
        match &self.rule {
            Rule::Static { alpha } => Some(*alpha),
            Rule::BangBang { .. } => {
                let level = if at_upper { capacity } else { 0.0 };
                Some(self.decide(level, 0.0, 1.0).allocation)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_env() -> (DistributionSpec, DistributionSpec) {
        (
            DistributionSpec::truncated_normal(5.0, 1.0).unwrap(),
            DistributionSpec::truncated_normal(5.0, 1.0).unwrap(),
        )
    }

    fn build_single(spec: PolicySpec, m: f64) -> Result<Policy> {
        let (s, d) = single_env();
        Policy::build(
            &spec,
            &PolicyEnv::Single {
                supply: &s,
                demand: &d,
            },
            m,
        )
    }

    #[test]
    fn static_allocates_alpha() {
        let p = build_single(PolicySpec::Static { alpha: 1.0, a_max: None }, 10.0).unwrap();
        assert_eq!(p.decide(3.0, 7.0, 2.0).allocation, 1.0);
        assert_eq!(p.decide(0.0, 0.0, 0.0).allocation, 1.0);
    }

    #[test]
    fn proportional_is_ratio_of_means() {
        let p = build_single(
            PolicySpec::Proportional {
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            10.0,
        )
        .unwrap();
        assert_eq!(p.decide(5.0, 1.0, 1.0).allocation, 1.0);
    }

    #[test]
    fn bang_bang_branches() {
        let spec = PolicySpec::BangBang {
            delta: 0.4,
            mu_b: None,
            mu_n: None,
            a_max: None,
        };
        let p = build_single(spec, 100.0).unwrap();
        assert_eq!(p.decide(30.0, 0.0, 0.0).allocation, 0.8);
        // Tie at M/2 takes the high branch.
        assert_eq!(p.decide(50.0, 0.0, 0.0).allocation, 1.2);
    }

    #[test]
    fn bang_bang_zero_delta_reduces_to_proportional() {
        let spec = PolicySpec::BangBang {
            delta: 0.0,
            mu_b: None,
            mu_n: None,
            a_max: None,
        };
        let p = build_single(spec, 100.0).unwrap();
        for level in [0.0, 10.0, 49.9, 50.0, 77.0, 100.0] {
            assert_eq!(p.decide(level, 0.0, 0.0).allocation, 1.0);
        }
    }

    #[test]
    fn bang_bang_delta_out_of_range() {
        let spec = PolicySpec::BangBang {
            delta: 2.0,
            mu_b: None,
            mu_n: None,
            a_max: None,
        };
        assert!(build_single(spec, 100.0).is_err());
        let spec = PolicySpec::BangBang {
            delta: -0.1,
            mu_b: None,
            mu_n: None,
            a_max: None,
        };
        assert!(build_single(spec, 100.0).is_err());
    }

    #[test]
    fn time_varying_uses_cycle_reference() {
        let supply = DistributionSpec::truncated_normal_schedule(vec![4.0, 6.0], 1.0).unwrap();
        let demand = DistributionSpec::truncated_normal_schedule(vec![5.0, 5.0], 1.0).unwrap();
        let p = Policy::build(
            &PolicySpec::TimeVaryingBangBang {
                delta: 0.2,
                a_max: None,
            },
            &PolicyEnv::Single {
                supply: &supply,
                demand: &demand,
            },
            20.0,
        )
        .unwrap();
        assert_eq!(p.decide(10.0, 0.0, 0.0).allocation, 1.1);
        assert_eq!(p.decide(9.9, 0.0, 0.0).allocation, 0.9);
    }

    #[test]
    fn time_varying_constant_schedule_matches_bang_bang() {
        let (s, d) = single_env();
        let env = PolicyEnv::Single {
            supply: &s,
            demand: &d,
        };
        let tv = Policy::build(
            &PolicySpec::TimeVaryingBangBang {
                delta: 0.3,
                a_max: None,
            },
            &env,
            40.0,
        )
        .unwrap();
        let bb = Policy::build(
            &PolicySpec::BangBang {
                delta: 0.3,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            &env,
            40.0,
        )
        .unwrap();
        for level in [0.0, 5.0, 19.9, 20.0, 33.0] {
            assert_eq!(
                tv.decide(level, 0.0, 0.0).allocation,
                bb.decide(level, 0.0, 0.0).allocation
            );
        }
    }

    fn multi_env(k: usize) -> (Vec<DistributionSpec>, Vec<DistributionSpec>) {
        let supplies = vec![DistributionSpec::truncated_normal(5.0, 1.0).unwrap(); k];
        let demand = vec![DistributionSpec::truncated_normal(5.0, 1.0).unwrap()];
        (supplies, demand)
    }

    #[test]
    fn multi_bang_bang_per_store_thresholds() {
        let (supplies, demand) = multi_env(2);
        let p = Policy::build(
            &PolicySpec::MultiBangBang {
                delta: 0.2,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            &PolicyEnv::Multi {
                supplies: &supplies,
                demand_by_type: &demand,
            },
            100.0,
        )
        .unwrap();
        // Per-store cap 50, threshold 25: level 10 is low, level 30 is high.
        let d = p.decide_multi(&[10.0, 30.0]).unwrap();
        assert_eq!(d.allocations, vec![vec![0.9, 1.1]]);
    }

    #[test]
    fn multi_with_one_resource_reduces_to_bang_bang() {
        let (supplies, demand) = multi_env(1);
        let multi = Policy::build(
            &PolicySpec::MultiBangBang {
                delta: 0.2,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            &PolicyEnv::Multi {
                supplies: &supplies,
                demand_by_type: &demand,
            },
            100.0,
        )
        .unwrap();
        let single = build_single(
            PolicySpec::BangBang {
                delta: 0.2,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            100.0,
        )
        .unwrap();
        for level in [0.0, 20.0, 49.9, 50.0, 80.0] {
            assert_eq!(
                multi.decide_multi(&[level]).unwrap().allocations[0][0],
                single.decide(level, 0.0, 0.0).allocation
            );
        }
    }

    #[test]
    fn eg_bang_bang_offsets_and_clamps() {
        let (supplies, demand) = multi_env(2);
        let env = PolicyEnv::Multi {
            supplies: &supplies,
            demand_by_type: &demand,
        };
        let table = vec![vec![1.0, 0.05]];
        let p = Policy::build(
            &PolicySpec::EgBangBang {
                delta: 0.2,
                eg_allocations: Some(table),
                a_max: None,
            },
            &env,
            100.0,
        )
        .unwrap();
        let d = p.decide_multi(&[10.0, 10.0]).unwrap();
        assert_eq!(d.allocations[0][0], 0.9);
        // 0.05 - 0.1 clamps at zero and the clamp is recorded.
        assert_eq!(d.allocations[0][1], 0.0);
        assert_eq!(d.clamps, 1);
    }

    #[test]
    fn eg_bang_bang_requires_table() {
        let (supplies, demand) = multi_env(2);
        let env = PolicyEnv::Multi {
            supplies: &supplies,
            demand_by_type: &demand,
        };
        assert!(Policy::build(
            &PolicySpec::EgBangBang {
                delta: 0.2,
                eg_allocations: None,
                a_max: None,
            },
            &env,
            100.0,
        )
        .is_err());
    }

    #[test]
    fn full_depletion() {
        let p = build_single(PolicySpec::FullDepletion { a_max: Some(10.0) }, 10.0).unwrap();
        assert_eq!(p.decide(4.0, 2.0, 3.0).allocation, 2.0);
        assert_eq!(p.decide(4.0, 2.0, 0.0).allocation, 0.0);
        // cap binds
        let p = build_single(PolicySpec::FullDepletion { a_max: Some(1.5) }, 10.0).unwrap();
        let d = p.decide(4.0, 2.0, 3.0);
        assert_eq!(d.allocation, 1.5);
        assert!(d.clamped);
    }

    #[test]
    fn static_alpha_outside_cap_rejected() {
        assert!(build_single(PolicySpec::Static { alpha: 2.0, a_max: Some(1.0) }, 10.0).is_err());
        assert!(build_single(PolicySpec::Static { alpha: -0.5, a_max: None }, 10.0).is_err());
    }

    #[test]
    fn bang_bang_trace_has_two_point_range_with_diameter_delta() {
        use crate::env::RngStream;
        use crate::inventory::{step, InventoryState};
        let delta = 0.3;
        let p = build_single(
            PolicySpec::BangBang {
                delta,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            12.0,
        )
        .unwrap();
        let (supply, demand) = single_env();
        let mut rng_b = RngStream::new(21, 0);
        let mut rng_n = RngStream::new(21, 1);
        let mut st = InventoryState::new(12.0, 6.0).unwrap();
        let mut allocs = std::collections::BTreeSet::new();
        for t in 0..5000 {
            let b = supply.sample(&mut rng_b, t);
            let n = demand.sample(&mut rng_n, t);
            let a = p.decide(st.level, b, n).allocation;
            allocs.insert(a.to_bits());
            st = step(st, b, n, a).0;
        }
        let vals: Vec<f64> = allocs.iter().map(|b| f64::from_bits(*b)).collect();
        assert_eq!(vals.len(), 2, "both branches visited, nothing else");
        assert!((vals[1] - vals[0] - delta).abs() < 1e-12);
    }

    #[test]
    fn branch_conditional_drift_matches_reverting_magnitude() {
        use crate::env::RngStream;
        use crate::inventory::{step, InventoryState};
        let delta = 0.3;
        let m = 30.0;
        let p = build_single(
            PolicySpec::BangBang {
                delta,
                mu_b: None,
                mu_n: None,
                a_max: None,
            },
            m,
        )
        .unwrap();
        let (supply, demand) = single_env();
        let mut rng_b = RngStream::new(77, 0);
        let mut rng_n = RngStream::new(77, 1);
        let mut st = InventoryState::new(m, m / 2.0).unwrap();
        let (mut sum_hi, mut n_hi, mut sumsq_hi) = (0.0, 0u64, 0.0);
        let (mut sum_lo, mut n_lo, mut sumsq_lo) = (0.0, 0u64, 0.0);
        for t in 0..400_000 {
            let b = supply.sample(&mut rng_b, t);
            let n = demand.sample(&mut rng_n, t);
            let high_branch = st.level >= m / 2.0;
            let a = p.decide(st.level, b, n).allocation;
            let (next, rec) = step(st, b, n, a);
            if high_branch {
                sum_hi += rec.drift;
                sumsq_hi += rec.drift * rec.drift;
                n_hi += 1;
            } else {
                sum_lo += rec.drift;
                sumsq_lo += rec.drift * rec.drift;
                n_lo += 1;
            }
            st = next;
        }
        let expect = 5.0 * delta / 2.0;
        for (sum, sumsq, n, sign) in [
            (sum_hi, sumsq_hi, n_hi, -1.0),
            (sum_lo, sumsq_lo, n_lo, 1.0),
        ] {
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - sign * expect).abs() < 3.0 * se + 1e-3,
                "branch drift {mean} vs {}",
                sign * expect
            );
        }
    }
}
