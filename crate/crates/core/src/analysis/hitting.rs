//! Hitting-time and boundary-return estimation on the unreflected walk,
//! plus the renewal-reward identity that converts those statistics into
//! long-run boundary occupancy fractions.
//!
//! The unreflected walk shares its increments with the store and agrees with
//! it until the first exit from the open interval, so exit times and exit
//! sides of the walk estimate the store's boundary hitting behavior. From a
//! boundary start the first step uses that boundary's allocation, and a
//! return to the start boundary counts as an exit on that side.

use crate::env::{derive_stream_id, DistributionSpec, RngStream};
use crate::error::{Error, Result};
use crate::inventory::step_unreflected;
use crate::policy::Policy;

/// Fallback total-step budget for one estimation call. Exits that cost more
/// than this signal an infeasible configuration.
pub const DEFAULT_STEP_BUDGET: u64 = 2_000_000_000;

/// Monte Carlo estimate of one exit experiment.
#[derive(Debug, Clone, Copy)]
pub struct ExitEstimate {
    /// Mean number of rounds until the walk leaves the interval.
    pub mean_time: f64,
    pub time_se: f64,
    /// Probability the walk exits at or above the upper end.
    pub p_high: f64,
    pub p_high_se: f64,
    pub replications: u64,
}

/// Exit times and same-boundary return probabilities from both boundaries.
#[derive(Debug, Clone, Copy)]
pub struct HittingStats {
    pub e_m: f64,
    pub e_m_se: f64,
    pub e_0: f64,
    pub e_0_se: f64,
    pub p_m: f64,
    pub p_m_se: f64,
    pub p_0: f64,
    pub p_0_se: f64,
}

/// Simulate the unreflected walk from `start` until it leaves `(lo, hi)`,
/// deciding allocations from the walk's current position (the policy's
/// threshold geometry comes from the capacity it was built with).
pub fn estimate_interval_exit(
    policy: &Policy,
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    lo: f64,
    hi: f64,
    start: f64,
    replications: u64,
    seed: u64,
    max_total_steps: u64,
) -> Result<ExitEstimate> {
    if !(lo < hi) || !(lo..=hi).contains(&start) {
        return Err(Error::InvalidParameter(format!(
            "interval ({lo}, {hi}) with start {start} is not a valid exit experiment"
        )));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let mut total_steps: u64 = 0;
    let mut sum_t = 0.0;
    let mut sum_t_sq = 0.0;
    let mut high_exits: u64 = 0;
    for rep in 0..replications {
        let salt = [start.to_bits(), hi.to_bits()];
        let mut rng_b = RngStream::new(seed, derive_stream_id(&[rep, 0, salt[0], salt[1]]));
        let mut rng_n = RngStream::new(seed, derive_stream_id(&[rep, 1, salt[0], salt[1]]));
        let mut q = start;
        let mut t: u64 = 0;
        loop {
            t += 1;
            total_steps += 1;
            if total_steps > max_total_steps {
                return Err(Error::ExitBudgetExhausted {
                    steps: total_steps,
                    exits: rep,
                    requested: replications,
                });
            }
            let b = supply.sample(&mut rng_b, t);
            let n = demand.sample(&mut rng_n, t);
            let allocation = policy.decide(q, b, n).allocation;
            q = step_unreflected(q, b - n * allocation);
            if q <= lo || q >= hi {
                break;
            }
        }
        let tf = t as f64;
        sum_t += tf;
        sum_t_sq += tf * tf;
        high_exits += (q >= hi) as u64;
    }
    let r = replications as f64;
    let mean_time = sum_t / r;
    let var_time = (sum_t_sq / r - mean_time * mean_time).max(0.0) * r / (r - 1.0).max(1.0);
    let p_high = high_exits as f64 / r;
    Ok(ExitEstimate {
        mean_time,
        time_se: (var_time / r).sqrt(),
        p_high,
        p_high_se: (p_high * (1.0 - p_high) / r).sqrt(),
        replications,
    })
}

/// Exit of the store interval `(0, m)` from `start`.
pub fn estimate_hitting(
    policy: &Policy,
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    m: f64,
    start: f64,
    replications: u64,
    seed: u64,
    max_total_steps: u64,
) -> Result<ExitEstimate> {
    estimate_interval_exit(
        policy,
        supply,
        demand,
        0.0,
        m,
        start,
        replications,
        seed,
        max_total_steps,
    )
}

/// Run the exit experiment from both boundaries: from `m` the same-boundary
/// return probability is the chance of exiting high, from `0` of exiting low.
pub fn boundary_hitting_stats(
    policy: &Policy,
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    m: f64,
    replications: u64,
    seed: u64,
    max_total_steps: u64,
) -> Result<HittingStats> {
    let from_top = estimate_hitting(
        policy,
        supply,
        demand,
        m,
        m,
        replications,
        seed,
        max_total_steps,
    )?;
    let from_bottom = estimate_hitting(
        policy,
        supply,
        demand,
        m,
        0.0,
        replications,
        seed.wrapping_add(1),
        max_total_steps,
    )?;
    Ok(HittingStats {
        e_m: from_top.mean_time,
        e_m_se: from_top.time_se,
        e_0: from_bottom.mean_time,
        e_0_se: from_bottom.time_se,
        p_m: from_top.p_high,
        p_m_se: from_top.p_high_se,
        p_0: 1.0 - from_bottom.p_high,
        p_0_se: from_bottom.p_high_se,
    })
}

/// Long-run boundary occupancy from hitting statistics:
/// `H_M = 1 / (E(M) + E(0) (1-p_M)/(1-p_0))` and symmetrically for `H_0`.
pub fn renewal_identity(e_m: f64, e_0: f64, p_m: f64, p_0: f64) -> Result<(f64, f64)> {
    for (name, e) in [("E(M)", e_m), ("E(0)", e_0)] {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {e}"
            )));
        }
    }
    for (name, p) in [("p_M", p_m), ("p_0", p_0)] {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "{name} must lie in [0, 1), got {p}"
            )));
        }
    }
    let h_m = 1.0 / (e_m + e_0 * (1.0 - p_m) / (1.0 - p_0));
    let h_0 = 1.0 / (e_m * (1.0 - p_0) / (1.0 - p_m) + e_0);
    Ok((h_m, h_0))
}

/// Renewal identity with standard errors propagated from the hitting-stat
/// standard errors (delta method with numerical partials).
pub fn renewal_identity_with_se(stats: &HittingStats) -> Result<((f64, f64), (f64, f64))> {
    let (h_m, h_0) = renewal_identity(stats.e_m, stats.e_0, stats.p_m, stats.p_0)?;
    let params = [stats.e_m, stats.e_0, stats.p_m, stats.p_0];
    let ses = [stats.e_m_se, stats.e_0_se, stats.p_m_se, stats.p_0_se];
    let mut var_m = 0.0;
    let mut var_0 = 0.0;
    for i in 0..4 {
        let h = (params[i].abs() * 1e-6).max(1e-9);
        let mut lo = params;
        let mut hi = params;
        lo[i] -= h;
        hi[i] += h;
        let f_lo = renewal_identity(lo[0], lo[1], lo[2], lo[3])?;
        let f_hi = renewal_identity(hi[0], hi[1], hi[2], hi[3])?;
        let dm = (f_hi.0 - f_lo.0) / (2.0 * h);
        let d0 = (f_hi.1 - f_lo.1) / (2.0 * h);
        var_m += (dm * ses[i]).powi(2);
        var_0 += (d0 * ses[i]).powi(2);
    }
    Ok(((h_m, h_0), (var_m.sqrt(), var_0.sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::solve_linear_system;
    use crate::policy::{Policy, PolicyEnv, PolicySpec};

    fn unit_walk_env() -> (DistributionSpec, DistributionSpec) {
        (
            DistributionSpec::bounded_discrete(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap(),
            DistributionSpec::deterministic(1.0).unwrap(),
        )
    }

    fn static_policy(alpha: f64, env: &(DistributionSpec, DistributionSpec), m: f64) -> Policy {
        Policy::build(
            &PolicySpec::Static { alpha, a_max: None },
            &PolicyEnv::Single {
                supply: &env.0,
                demand: &env.1,
            },
            m,
        )
        .unwrap()
    }

    #[test]
    fn gamblers_ruin_expected_exit_time() {
        // Symmetric +/-1 drift from M/2 on (0, 10): E[tau] = 25, checked
        // against the exact first-step linear system as the oracle.
        let env = unit_walk_env();
        let policy = static_policy(1.0, &env, 10.0);
        let est = estimate_hitting(
            &policy,
            &env.0,
            &env.1,
            10.0,
            5.0,
            20_000,
            7,
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();

        // Oracle: E(s) = 1 + (E(s-1) + E(s+1))/2 on interior states.
        let n = 9; // states 1..=9
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![1.0; n];
        for i in 0..n {
            a[i][i] = 1.0;
            if i > 0 {
                a[i][i - 1] = -0.5;
            }
            if i + 1 < n {
                a[i][i + 1] = -0.5;
            }
        }
        let e = solve_linear_system(a, b.clone()).unwrap();
        b.clear();
        let oracle = e[4]; // state 5
        assert!((oracle - 25.0).abs() < 1e-9);
        assert!(
            (est.mean_time - oracle).abs() < 3.0 * est.time_se,
            "estimate {} +- {} vs 25",
            est.mean_time,
            est.time_se
        );
    }

    #[test]
    fn exit_from_boundary_counts_returns() {
        // From start M with a positive first-step probability of jumping
        // back, p_high must be strictly inside (0, 1).
        let env = unit_walk_env();
        let policy = static_policy(1.0, &env, 6.0);
        let est = estimate_hitting(
            &policy,
            &env.0,
            &env.1,
            6.0,
            6.0,
            5_000,
            11,
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();
        assert!(est.p_high > 0.0 && est.p_high < 1.0);
        assert!(est.mean_time >= 1.0);
    }

    #[test]
    fn budget_exhaustion_reported() {
        // Zero-variance environment never exits the interior: the budget
        // error signals the infeasible configuration.
        let supply = DistributionSpec::deterministic(5.0).unwrap();
        let demand = DistributionSpec::deterministic(5.0).unwrap();
        let env = (supply, demand);
        let policy = static_policy(1.0, &env, 10.0);
        let err = estimate_hitting(&policy, &env.0, &env.1, 10.0, 5.0, 10, 3, 10_000).unwrap_err();
        assert!(matches!(err, Error::ExitBudgetExhausted { .. }));
    }

    #[test]
    fn renewal_identity_worked_example() {
        let (h_m, h_0) = renewal_identity(10.0, 8.0, 0.9, 0.9).unwrap();
        assert!((h_m - 1.0 / 18.0).abs() < 1e-15);
        assert!((h_0 - 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn renewal_identity_symmetry() {
        let (h_m, h_0) = renewal_identity(12.0, 7.0, 0.8, 0.6).unwrap();
        let (h_m2, h_02) = renewal_identity(7.0, 12.0, 0.6, 0.8).unwrap();
        assert_eq!(h_m, h_02);
        assert_eq!(h_0, h_m2);
    }

    #[test]
    fn renewal_identity_rejects_degenerate_probabilities() {
        assert!(renewal_identity(10.0, 10.0, 1.0, 0.5).is_err());
        assert!(renewal_identity(10.0, 10.0, 0.5, 1.0).is_err());
        assert!(renewal_identity(0.0, 10.0, 0.5, 0.5).is_err());
    }
}
