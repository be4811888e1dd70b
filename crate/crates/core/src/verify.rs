//! Numerical oracle suite: cross-validates the closed forms, bounds, and
//! estimators against independent routes and emits a machine-readable
//! pass/fail report with per-check residuals.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    binomial_tail_bound, binomial_tail_exact, birth_death_stationary_closed_form,
    birth_death_stationary_solve, boundary_hitting_stats, check_delta_feasible, drift_moments,
    epoch_lower_bound, estimate_hitting, estimate_interval_exit, renewal_identity,
    renewal_identity_with_se, supermartingale_mgf_check, BirthDeathChain, EpochCase,
    DEFAULT_STEP_BUDGET,
};
use crate::config::{EnvConfig, ExperimentConfig};
use crate::env::DistributionSpec;
use crate::harness::run_replication;
use crate::policy::{Policy, PolicyEnv, PolicySpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst residual or deviation observed by the check (check-specific
    /// units; zero when the check is purely boolean and passed).
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    fn push(&mut self, check: CheckResult) {
        self.passed &= check.passed;
        self.checks.push(check);
    }
}

fn check(name: &str, passed: bool, residual: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        residual,
        detail,
    }
}

/// Run the full oracle suite. `seed` drives every Monte Carlo check.
pub fn run_verification(seed: u64) -> VerifyReport {
    let mut report = VerifyReport {
        passed: true,
        checks: Vec::new(),
    };
    report.push(birth_death_agreement());
    report.push(birth_death_uniform());
    report.push(birth_death_decay());
    report.push(binomial_examples());
    report.push(binomial_scan());
    report.push(epoch_cases());
    report.push(renewal_example());
    report.push(feasibility_checks());
    report.push(mgf_checks());
    report.push(gamblers_ruin(seed));
    report.push(hitting_time_lower_bound(seed));
    report.push(renewal_end_to_end(seed));
    report.push(crossing_probability_growth(seed));
    report
}

fn birth_death_agreement() -> CheckResult {
    let mut worst = 0.0f64;
    for &p in &[0.1, 0.25, 0.4] {
        for &delta in &[0.0, 0.05, 0.1] {
            for &m in &[4usize, 10, 50] {
                let chain = match BirthDeathChain::new(m, p, delta) {
                    Ok(c) => c,
                    Err(e) => {
                        return check(
                            "birth_death_closed_vs_solve",
                            false,
                            f64::NAN,
                            format!("chain construction failed: {e}"),
                        )
                    }
                };
                let closed = birth_death_stationary_closed_form(p, delta, m).unwrap();
                let solved = match birth_death_stationary_solve(&chain) {
                    Ok(s) => s,
                    Err(e) => {
                        return check(
                            "birth_death_closed_vs_solve",
                            false,
                            f64::NAN,
                            format!("solve failed at p={p} d={delta} m={m}: {e}"),
                        )
                    }
                };
                let err = closed
                    .iter()
                    .zip(&solved)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                worst = worst.max(err);
            }
        }
    }
    check(
        "birth_death_closed_vs_solve",
        worst <= 1e-10,
        worst,
        format!("max abs gap {worst:.3e} over the 3x3x3 grid (tolerance 1e-10)"),
    )
}

fn birth_death_uniform() -> CheckResult {
    let pi = birth_death_stationary_closed_form(0.3, 0.0, 7).unwrap();
    let worst = pi
        .iter()
        .map(|x| (x - 1.0 / 8.0).abs())
        .fold(0.0f64, f64::max);
    check(
        "birth_death_uniform_at_zero_bias",
        worst == 0.0,
        worst,
        "closed form returns exactly 1/(m+1) when the bias is zero".into(),
    )
}

fn birth_death_decay() -> CheckResult {
    let (p, delta) = (0.25, 0.1);
    let rho: f64 = (2.0 * p + delta) / (2.0 * p - delta);
    let mut points = Vec::new();
    for i in 1..=10usize {
        let m = 10 * i;
        let chain = BirthDeathChain::new(m, p, delta).unwrap();
        let pi = birth_death_stationary_solve(&chain).unwrap();
        points.push((m as f64, pi[0].ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let slope = points
        .iter()
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / points.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    let expected = -rho.ln() / 2.0;
    let rel = ((slope - expected) / expected).abs();
    check(
        "birth_death_boundary_mass_decay",
        slope < 0.0 && rel < 0.05,
        rel,
        format!("log pi[0] slope {slope:.5} vs -ln(rho)/2 = {expected:.5}"),
    )
}

fn binomial_examples() -> CheckResult {
    let a = binomial_tail_bound(8, 1).unwrap();
    let b = binomial_tail_bound(16, 2).unwrap();
    let err_a = (a.exact - 93.0 / 256.0).abs();
    let err_b = (b.exact - 14893.0 / 65536.0).abs();
    let worst = err_a.max(err_b);
    check(
        "binomial_tail_examples",
        worst < 1e-14 && a.holds && b.holds,
        worst,
        format!(
            "P(B8>=5) = {:.12} (93/256), P(B16>=10) = {:.12} (14893/65536)",
            a.exact, b.exact
        ),
    )
}

fn binomial_scan() -> CheckResult {
    let mut violations = 0u64;
    let mut cases = 0u64;
    for l in (8..=200u64).step_by(2) {
        for t in 1..=(l / 8) {
            cases += 1;
            if !binomial_tail_bound(l, t).unwrap().holds {
                violations += 1;
            }
        }
    }
    check(
        "binomial_tail_bound_scan",
        violations == 0,
        violations as f64,
        format!("{cases} (l, t) pairs scanned, {violations} violations"),
    )
}

fn epoch_cases() -> CheckResult {
    let under = epoch_lower_bound(0.2, 0.1, 10.0).unwrap();
    let over = epoch_lower_bound(0.6, 0.1, 10.0).unwrap();
    let straddle = epoch_lower_bound(0.5, 1.0 / 9.0, 9.0).unwrap();
    let expected_tail = binomial_tail_exact(648, 397);
    let ok = under.case == EpochCase::UnderAllocation
        && under.w_lb == 0.5
        && under.epoch_len == 55
        && over.case == EpochCase::OverAllocation
        && over.v_lb == 0.5
        && straddle.case == EpochCase::Straddling
        && straddle.epoch_len == 648
        && straddle.v_lb > 0.0
        && straddle.v_lb == expected_tail;
    check(
        "epoch_lower_bound_cases",
        ok,
        (straddle.v_lb - expected_tail).abs(),
        format!(
            "case bounds: under (W>=0.5, L=55), over (V>=0.5), straddle tail {:.6e}",
            straddle.v_lb
        ),
    )
}

fn renewal_example() -> CheckResult {
    let (h_m, h_0) = renewal_identity(10.0, 8.0, 0.9, 0.9).unwrap();
    let (swapped_m, swapped_0) = renewal_identity(8.0, 10.0, 0.9, 0.9).unwrap();
    let err = (h_m - 1.0 / 18.0)
        .abs()
        .max((h_0 - 1.0 / 18.0).abs())
        .max((swapped_m - h_0).abs())
        .max((swapped_0 - h_m).abs());
    check(
        "renewal_identity_example",
        err < 1e-15,
        err,
        "direct substitution gives 1/18 on both sides; swapping boundaries swaps the fractions"
            .into(),
    )
}

fn feasibility_checks() -> CheckResult {
    let two_point =
        DistributionSpec::bounded_discrete(vec![0.0, 10.0], vec![0.5, 0.5]).unwrap();
    let unit_five = DistributionSpec::deterministic(5.0).unwrap();
    let report = check_delta_feasible(&two_point, &unit_five, 0.2, None);
    let exact_ok = report.feasible
        && (report.epsilon - 4.5).abs() < 1e-12
        && (report.delta_prob - 0.5).abs() < 1e-12;

    let degenerate = check_delta_feasible(&unit_five, &unit_five, 0.2, None);
    let infeasible_ok = !degenerate.feasible;

    let spread_demand =
        DistributionSpec::bounded_discrete(vec![4.0, 6.0], vec![0.5, 0.5]).unwrap();
    let with_tails = check_delta_feasible(&two_point, &spread_demand, 0.2, None);
    let sufficient_ok = match with_tails.sufficient_delta_bound {
        Some(bound) if bound > 0.0 => {
            check_delta_feasible(&two_point, &spread_demand, bound, None).feasible
        }
        _ => false,
    };
    check(
        "delta_feasibility",
        exact_ok && infeasible_ok && sufficient_ok,
        0.0,
        format!(
            "two-point margins (eps={}, delta={}), zero-variance infeasible, \
             tail-certified delta re-checks feasible",
            report.epsilon, report.delta_prob
        ),
    )
}

fn mgf_checks() -> CheckResult {
    let supply = DistributionSpec::bounded_discrete(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
    let demand = DistributionSpec::deterministic(1.0).unwrap();
    let example = supermartingale_mgf_check(&supply, &demand, 0.2, 1.0, None).unwrap();
    let expected = ((0.16f64).exp() + (-0.24f64).exp()) / 2.0;
    let err = (example.expectation - expected).abs();
    let boundary = supermartingale_mgf_check(&supply, &demand, 0.2, 0.0, None).unwrap();
    let bound = boundary.sufficient_c_bound.unwrap();
    let mut range_ok = true;
    for i in 1..=20 {
        let c = bound * i as f64 / 21.0;
        range_ok &= supermartingale_mgf_check(&supply, &demand, 0.2, c, None)
            .unwrap()
            .holds;
    }
    check(
        "supermartingale_mgf",
        err < 1e-12 && example.holds && boundary.expectation == 1.0 && range_ok,
        err,
        format!(
            "E = {:.6} (expected {expected:.6}); holds across c in (0, {bound:.4})",
            example.expectation
        ),
    )
}

fn unit_walk() -> (DistributionSpec, DistributionSpec) {
    (
        DistributionSpec::bounded_discrete(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap(),
        DistributionSpec::deterministic(1.0).unwrap(),
    )
}

fn truncated_normal_pair() -> (DistributionSpec, DistributionSpec) {
    (
        DistributionSpec::truncated_normal(5.0, 1.0).unwrap(),
        DistributionSpec::truncated_normal(5.0, 1.0).unwrap(),
    )
}

fn static_policy(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    alpha: f64,
    m: f64,
) -> Policy {
    Policy::build(
        &PolicySpec::Static { alpha, a_max: None },
        &PolicyEnv::Single { supply, demand },
        m,
    )
    .unwrap()
}

fn bang_bang_policy(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    delta: f64,
    m: f64,
) -> Policy {
    Policy::build(
        &PolicySpec::BangBang {
            delta,
            mu_b: None,
            mu_n: None,
            a_max: None,
        },
        &PolicyEnv::Single { supply, demand },
        m,
    )
    .unwrap()
}

fn gamblers_ruin(seed: u64) -> CheckResult {
    let (supply, demand) = unit_walk();
    let policy = static_policy(&supply, &demand, 1.0, 10.0);
    let est = estimate_hitting(
        &policy,
        &supply,
        &demand,
        10.0,
        5.0,
        20_000,
        seed ^ 0xa5a5,
        DEFAULT_STEP_BUDGET,
    )
    .unwrap();
    let gap = (est.mean_time - 25.0).abs();
    check(
        "gamblers_ruin_exit_time",
        gap <= 3.0 * est.time_se,
        gap,
        format!(
            "estimated E[tau] = {:.3} +- {:.3} vs exact 25 (symmetric unit walk from M/2)",
            est.mean_time, est.time_se
        ),
    )
}

fn hitting_time_lower_bound(seed: u64) -> CheckResult {
    let (supply, demand) = truncated_normal_pair();
    let m = 20.0;
    let policy = static_policy(&supply, &demand, 1.0, m);
    let sigma_sq = drift_moments(&supply, &demand, 1.0, 1_000_000, seed ^ 0x11).second_moment;
    let start = 10.0;
    let est = estimate_hitting(
        &policy,
        &supply,
        &demand,
        m,
        start,
        20_000,
        seed ^ 0x12,
        DEFAULT_STEP_BUDGET,
    )
    .unwrap();
    let floor = start * (m - start) / sigma_sq;
    let slack = est.mean_time - (floor - 3.0 * est.time_se);
    check(
        "hitting_time_lower_bound",
        slack >= 0.0,
        slack,
        format!(
            "E[tau({start})] = {:.2} +- {:.2} vs S(M-S)/sigma^2 = {floor:.2}",
            est.mean_time, est.time_se
        ),
    )
}

fn renewal_end_to_end(seed: u64) -> CheckResult {
    // Five (policy, capacity) configurations; the renewal identity applied to
    // estimated hitting statistics must agree with directly simulated
    // boundary occupancy within three combined standard errors.
    let (supply, demand) = truncated_normal_pair();
    let configs: [(f64, f64); 5] = [
        (20.0, 0.0),
        (40.0, 0.0),
        (30.0, 0.1),
        (20.0, 0.2),
        (20.0, 0.3),
    ];
    let mut detail = String::new();
    let mut worst = 0.0f64;
    let mut all_ok = true;
    for (i, &(m, delta)) in configs.iter().enumerate() {
        let policy = if delta == 0.0 {
            static_policy(&supply, &demand, 1.0, m)
        } else {
            bang_bang_policy(&supply, &demand, delta, m)
        };
        let stats = match boundary_hitting_stats(
            &policy,
            &supply,
            &demand,
            m,
            20_000,
            seed ^ (0x100 + i as u64),
            DEFAULT_STEP_BUDGET,
        ) {
            Ok(s) => s,
            Err(e) => {
                return check(
                    "renewal_identity_end_to_end",
                    false,
                    f64::NAN,
                    format!("hitting estimation failed at (M={m}, delta={delta}): {e}"),
                )
            }
        };
        let ((h_m, h_0), (h_m_se, h_0_se)) = renewal_identity_with_se(&stats).unwrap();

        let (dm, dm_se, d0, d0_se) =
            direct_boundary_occupancy(&supply, &demand, m, delta, seed ^ (0x200 + i as u64));
        for (renewed, renewed_se, direct, direct_se, side) in [
            (h_m, h_m_se, dm, dm_se, "H_M"),
            (h_0, h_0_se, d0, d0_se, "H_0"),
        ] {
            let combined = (renewed_se * renewed_se + direct_se * direct_se).sqrt();
            let gap = (renewed - direct).abs();
            let sigma = if combined > 0.0 { gap / combined } else { f64::INFINITY };
            worst = worst.max(sigma);
            if gap > 3.0 * combined {
                all_ok = false;
                detail.push_str(&format!(
                    "(M={m}, delta={delta}) {side}: renewal {renewed:.4e} vs direct {direct:.4e} \
                     gap {sigma:.1} sigma; "
                ));
            }
        }
    }
    if detail.is_empty() {
        detail = format!("five configurations agree; worst gap {worst:.2} sigma");
    }
    check("renewal_identity_end_to_end", all_ok, worst, detail)
}

fn direct_boundary_occupancy(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    m: f64,
    delta: f64,
    seed: u64,
) -> (f64, f64, f64, f64) {
    let policy_spec = if delta == 0.0 {
        PolicySpec::Proportional {
            mu_b: None,
            mu_n: None,
            a_max: None,
        }
    } else {
        PolicySpec::BangBang {
            delta,
            mu_b: None,
            mu_n: None,
            a_max: None,
        }
    };
    let mut config = ExperimentConfig::new(
        EnvConfig::single(supply.clone(), demand.clone()),
        policy_spec,
    );
    config.horizon = 20_000;
    config.replications = 50;
    config.seed = seed;
    let reps: Vec<_> = (0..config.replications)
        .map(|rep| run_replication(&config, m, delta, rep).unwrap())
        .collect();
    let n = reps.len() as f64;
    let mean_se = |f: &dyn Fn(&crate::metrics::RunSummary) -> f64| {
        let mean = reps.iter().map(|s| f(s)).sum::<f64>() / n;
        let var = reps.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (hm, hm_se) = mean_se(&|s| s.h_m);
    let (h0, h0_se) = mean_se(&|s| s.h_0);
    (hm, hm_se, h0, h0_se)
}

fn crossing_probability_growth(seed: u64) -> CheckResult {
    // Started just below the midpoint, the walk should cross it before
    // hitting zero with probability approaching one as capacity grows, the
    // failure probability shrinking at least geometrically.
    let (supply, demand) = truncated_normal_pair();
    let delta = 0.1;
    let mut failures = Vec::new();
    for (i, &m) in [20.0f64, 40.0, 80.0].iter().enumerate() {
        let policy = bang_bang_policy(&supply, &demand, delta, m);
        let est = estimate_interval_exit(
            &policy,
            &supply,
            &demand,
            0.0,
            m / 2.0,
            m / 2.0 - 1.0,
            100_000,
            seed ^ (0x300 + i as u64),
            DEFAULT_STEP_BUDGET,
        )
        .unwrap();
        failures.push(1.0 - est.p_high);
    }
    let geometric = failures[1] <= failures[0] / 2.0 && failures[2] <= failures[1] / 2.0;
    let approaches_one = failures[2] < 0.01 && failures[0] < 0.5;
    check(
        "midpoint_crossing_probability",
        geometric && approaches_one,
        failures[2],
        format!(
            "failure probabilities {:.3e} -> {:.3e} -> {:.3e} over M = 20, 40, 80",
            failures[0], failures[1], failures[2]
        ),
    )
}
