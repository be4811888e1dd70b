//! Drift feasibility checks for the bang-bang policy: whether both branch
//! drifts mix (strictly positive and strictly negative with constant
//! probability), the sufficient fairness range derived from distribution
//! tails, and the exponential supermartingale condition behind the
//! hitting-probability bounds.

use crate::env::{DistributionSpec, RngStream};
use crate::error::{Error, Result};

const MC_SAMPLES: u64 = 1_000_000;
const WILSON_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityMethod {
    /// Exact enumeration over finite joint support.
    Exact,
    /// Monte Carlo with Wilson interval lower bounds.
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Drift margin achieving the best probability floor (0 if infeasible).
    pub epsilon: f64,
    /// Probability floor at that margin: both branch events occur with at
    /// least this probability.
    pub delta_prob: f64,
    pub method: FeasibilityMethod,
    /// Largest fairness parameter certified by the tail-based sufficient
    /// condition, when the tails support one.
    pub sufficient_delta_bound: Option<f64>,
    pub checked_delta: f64,
}

/// Check whether `delta` admits margins `(epsilon, delta_prob)` such that the
/// high-branch drift exceeds `+epsilon` and the low-branch drift falls below
/// `-epsilon`, each with probability at least `delta_prob`. Exact when both
/// marginals have finite support, Monte Carlo otherwise.
pub fn check_delta_feasible(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    delta: f64,
    epsilon_grid: Option<&[f64]>,
) -> FeasibilityReport {
    let mu_b = supply.nominal_mean();
    let mu_n = demand.nominal_mean();
    let reference = mu_b / mu_n;
    let high = reference + delta / 2.0;
    let low = reference - delta / 2.0;

    let (best, method) = match (supply.finite_support(), demand.finite_support()) {
        (Some(sb), Some(sn)) => {
            let mut atoms_high = Vec::new();
            let mut atoms_low = Vec::new();
            for &(b, pb) in &sb {
                for &(n, pn) in &sn {
                    atoms_high.push((b - n * high, pb * pn));
                    atoms_low.push((b - n * low, pb * pn));
                }
            }
            let candidates: Vec<f64> = match epsilon_grid {
                Some(grid) => grid.to_vec(),
                None => {
                    let mut c: Vec<f64> = atoms_high
                        .iter()
                        .map(|&(z, _)| z)
                        .filter(|&z| z > 0.0)
                        .chain(atoms_low.iter().map(|&(z, _)| -z).filter(|&z| z > 0.0))
                        .collect();
                    c.sort_by(f64::total_cmp);
                    c.dedup();
                    c
                }
            };
            let mut best = (0.0, 0.0);
            for &eps in &candidates {
                if eps <= 0.0 {
                    continue;
                }
                let p_hi: f64 = atoms_high
                    .iter()
                    .filter(|&&(z, _)| z >= eps)
                    .map(|&(_, p)| p)
                    .sum();
                let p_lo: f64 = atoms_low
                    .iter()
                    .filter(|&&(z, _)| z <= -eps)
                    .map(|&(_, p)| p)
                    .sum();
                let floor = p_hi.min(p_lo);
                if floor > best.1 || (floor == best.1 && eps > best.0) {
                    best = (eps, floor);
                }
            }
            (best, FeasibilityMethod::Exact)
        }
        _ => {
            let mut rng_b = RngStream::new(0x5eed, 101);
            let mut rng_n = RngStream::new(0x5eed, 102);
            let mut drift_high = Vec::with_capacity(MC_SAMPLES as usize);
            let mut drift_low = Vec::with_capacity(MC_SAMPLES as usize);
            for t in 0..MC_SAMPLES {
                let b = supply.sample(&mut rng_b, t);
                let n = demand.sample(&mut rng_n, t);
                drift_high.push(b - n * high);
                drift_low.push(b - n * low);
            }
            let candidates: Vec<f64> = match epsilon_grid {
                Some(grid) => grid.to_vec(),
                None => {
                    let scale = drift_high
                        .iter()
                        .chain(drift_low.iter())
                        .fold(0.0f64, |acc, &z| acc.max(z.abs()));
                    (1..=64).map(|i| scale * i as f64 / 64.0).collect()
                }
            };
            let mut best = (0.0, 0.0);
            for &eps in &candidates {
                if eps <= 0.0 {
                    continue;
                }
                let hits_hi = drift_high.iter().filter(|&&z| z >= eps).count() as u64;
                let hits_lo = drift_low.iter().filter(|&&z| z <= -eps).count() as u64;
                let floor = wilson_lower(hits_hi, MC_SAMPLES).min(wilson_lower(hits_lo, MC_SAMPLES));
                if floor > best.1 || (floor == best.1 && eps > best.0) {
                    best = (eps, floor);
                }
            }
            (best, FeasibilityMethod::MonteCarlo)
        }
    };

    let sufficient = sufficient_delta_bound(supply, demand, mu_b, mu_n);
    FeasibilityReport {
        feasible: best.1 > 0.0,
        epsilon: best.0,
        delta_prob: best.1,
        method,
        sufficient_delta_bound: sufficient,
        checked_delta: delta,
    }
}

/// Largest `delta` certified by the tail condition: pick the largest `c`
/// with all four of `P(B >= mu_B + c)`, `P(B <= mu_B - c)`,
/// `P(N >= mu_N + c/2)`, `P(N <= mu_N - c/2)` strictly positive, and report
/// `c (mu_B + mu_N) / (mu_N (mu_N + c/2))`.
fn sufficient_delta_bound(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    mu_b: f64,
    mu_n: f64,
) -> Option<f64> {
    let spread = |spec: &DistributionSpec, mean: f64| -> Option<(f64, f64)> {
        match spec.finite_support() {
            Some(atoms) => {
                let max = atoms.iter().filter(|&&(_, p)| p > 0.0).map(|&(v, _)| v).fold(
                    f64::NEG_INFINITY,
                    f64::max,
                );
                let min = atoms
                    .iter()
                    .filter(|&&(_, p)| p > 0.0)
                    .map(|&(v, _)| v)
                    .fold(f64::INFINITY, f64::min);
                Some((max - mean, mean - min))
            }
            None => {
                // Conservative sample quantiles stand in for the support edges.
                let mut rng = RngStream::new(0xd1a9, 7);
                let mut draws: Vec<f64> = (0..20_000u64).map(|t| spec.sample(&mut rng, t)).collect();
                draws.sort_by(f64::total_cmp);
                let lo = draws[(draws.len() as f64 * 0.01) as usize];
                let hi = draws[(draws.len() as f64 * 0.99) as usize];
                Some((hi - mean, mean - lo))
            }
        }
    };
    let (b_up, b_down) = spread(supply, mu_b)?;
    let (n_up, n_down) = spread(demand, mu_n)?;
    let c = b_up.min(b_down).min(2.0 * n_up).min(2.0 * n_down);
    if !(c > 0.0) {
        return None;
    }
    Some(c * (mu_b + mu_n) / (mu_n * (mu_n + c / 2.0)))
}

fn wilson_lower(successes: u64, n: u64) -> f64 {
    if successes == 0 {
        return 0.0;
    }
    let z = WILSON_Z;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf);
    (center - half).max(0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct MgfCheck {
    /// `E[exp(-c delta (B - (ref - delta) N))]`.
    pub expectation: f64,
    /// Whether the supermartingale condition `expectation <= 1` holds.
    pub holds: bool,
    /// Sufficient range `c < 8 mu_N / (B_max + ref N_max)^2` for bounded
    /// supports.
    pub sufficient_c_bound: Option<f64>,
}

/// Condition under which `exp(-c delta Q_t)` is a supermartingale while the
/// walk sits below the policy threshold. Exact on finite supports; pass a
/// Monte Carlo sample count for unbounded families.
pub fn supermartingale_mgf_check(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    delta: f64,
    c: f64,
    mc_samples: Option<u64>,
) -> Result<MgfCheck> {
    if !(delta >= 0.0) || !(c >= 0.0) {
        return Err(Error::InvalidParameter(
            "delta and c must be nonnegative".into(),
        ));
    }
    let mu_b = supply.nominal_mean();
    let mu_n = demand.nominal_mean();
    let reference = mu_b / mu_n;
    let under_allocation = reference - delta;
    let lambda = c * delta;

    let (expectation, sufficient) = match (supply.finite_support(), demand.finite_support()) {
        (Some(sb), Some(sn)) => {
            let mut e = 0.0;
            for &(b, pb) in &sb {
                for &(n, pn) in &sn {
                    e += pb * pn * (-lambda * (b - under_allocation * n)).exp();
                }
            }
            let b_max = sb.iter().map(|&(v, _)| v).fold(f64::NEG_INFINITY, f64::max);
            let n_max = sn.iter().map(|&(v, _)| v).fold(f64::NEG_INFINITY, f64::max);
            let denom = (b_max + reference * n_max).powi(2);
            (e, Some(8.0 * mu_n / denom))
        }
        _ => {
            let samples = mc_samples.ok_or_else(|| {
                Error::InvalidParameter(
                    "unbounded support: pass a Monte Carlo sample count".into(),
                )
            })?;
            let mut rng_b = RngStream::new(0x316f, 11);
            let mut rng_n = RngStream::new(0x316f, 12);
            let mut acc = 0.0;
            for t in 0..samples {
                let b = supply.sample(&mut rng_b, t);
                let n = demand.sample(&mut rng_n, t);
                acc += (-lambda * (b - under_allocation * n)).exp();
            }
            (acc / samples as f64, None)
        }
    };
    Ok(MgfCheck {
        expectation,
        holds: expectation <= 1.0 + 1e-12,
        sufficient_c_bound: sufficient,
    })
}

/// Exact or sampled moments of the drift `Z = B - alpha N`.
#[derive(Debug, Clone, Copy)]
pub struct DriftMoments {
    pub mean: f64,
    /// `E[Z^2]`.
    pub second_moment: f64,
    /// `E[Z^+]`.
    pub pos_mean: f64,
    /// `E[Z^-]` (the mean of the negative part, reported positively).
    pub neg_mean: f64,
}

pub fn drift_moments(
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    alpha: f64,
    mc_samples: u64,
    seed: u64,
) -> DriftMoments {
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut pos = 0.0;
    let mut neg = 0.0;
    match (supply.finite_support(), demand.finite_support()) {
        (Some(sb), Some(sn)) => {
            for &(b, pb) in &sb {
                for &(n, pn) in &sn {
                    let z = b - alpha * n;
                    let p = pb * pn;
                    mean += p * z;
                    second += p * z * z;
                    pos += p * z.max(0.0);
                    neg += p * (-z).max(0.0);
                }
            }
        }
        _ => {
            let mut rng_b = RngStream::new(seed, 301);
            let mut rng_n = RngStream::new(seed, 302);
            for t in 0..mc_samples {
                let b = supply.sample(&mut rng_b, t);
                let n = demand.sample(&mut rng_n, t);
                let z = b - alpha * n;
                mean += z;
                second += z * z;
                pos += z.max(0.0);
                neg += (-z).max(0.0);
            }
            let s = mc_samples as f64;
            mean /= s;
            second /= s;
            pos /= s;
            neg /= s;
        }
    }
    DriftMoments {
        mean,
        second_moment: second,
        pos_mean: pos,
        neg_mean: neg,
    }
}
