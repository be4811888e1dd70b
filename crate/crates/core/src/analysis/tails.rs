//! Exact binomial tails in log space, the tail lower bound they are checked
//! against, and the epoch construction that turns those tails into
//! overflow/stockout lower bounds for bounded-envy policies on the
//! coin-flip supply instance.

use crate::error::{Error, Result};

/// `ln C(n, k)` from a prefix-sum table of `ln i!`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "k = {k} > n = {n}");
    let table = ln_factorial_table(n as usize);
    table[n as usize] - table[k as usize] - table[(n - k) as usize]
}

fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    let mut acc = 0.0;
    let mut compensation = 0.0;
    for (i, entry) in table.iter_mut().enumerate().skip(1) {
        let y = (i as f64).ln() - compensation;
        let t = acc + y;
        compensation = (t - acc) - y;
        acc = t;
        *entry = acc;
    }
    table
}

/// Ceiling with a tiny relative snap, so quotients that are mathematically
/// integral do not round up from floating-point noise.
fn ceil_snapped(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// `Pr(Binomial(l, 1/2) >= threshold)` by exact summation: per-term
/// log-domain binomial coefficients, accumulated from the smallest term
/// upward with Kahan compensation.
pub fn binomial_tail_exact(l: u64, threshold: u64) -> f64 {
    if threshold > l {
        return 0.0;
    }
    let table = ln_factorial_table(l as usize);
    let ln_c = |j: u64| table[l as usize] - table[j as usize] - table[(l - j) as usize];
    let ln_half_pow = l as f64 * std::f64::consts::LN_2;
    let mut sum = 0.0;
    let mut compensation = 0.0;
    // Terms grow toward the mode, so iterate j = l down to the threshold.
    for j in (threshold..=l).rev() {
        let term = (ln_c(j) - ln_half_pow).exp();
        let y = term - compensation;
        let t = sum + y;
        compensation = (t - sum) - y;
        sum = t;
    }
    sum.min(1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct TailBoundCheck {
    /// `Pr(Binomial(l, 1/2) >= l/2 + t)`, exactly.
    pub exact: f64,
    /// `(1/15) exp(-16 t^2 / l)`.
    pub bound: f64,
    /// Whether the exact tail dominates the bound.
    pub holds: bool,
}

/// Check the binomial tail lower bound for even `l` and integer
/// `t` in `(0, l/8]`.
pub fn binomial_tail_bound(l: u64, t: u64) -> Result<TailBoundCheck> {
    if l == 0 || l % 2 != 0 {
        return Err(Error::InvalidParameter(format!("l must be even, got {l}")));
    }
    if t == 0 || 8 * t > l {
        return Err(Error::InvalidParameter(format!(
            "t must lie in (0, l/8], got t = {t} for l = {l}"
        )));
    }
    let exact = binomial_tail_exact(l, l / 2 + t);
    let bound = (1.0 / 15.0) * (-16.0 * (t * t) as f64 / l as f64).exp();
    Ok(TailBoundCheck {
        exact,
        bound,
        holds: exact >= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochCase {
    /// Allocations too low: overflow at least 1/2 per epoch.
    UnderAllocation,
    /// Allocations too high: stockout at least 1/2 per epoch.
    OverAllocation,
    /// Allocation band straddles the mean supply: the exact binomial tail
    /// gives an exponentially small but positive stockout rate.
    Straddling,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochBound {
    pub case: EpochCase,
    /// Lower bound on the long-run average overflow.
    pub w_lb: f64,
    /// Lower bound on the long-run average stockout.
    pub v_lb: f64,
    /// Epoch length realizing the bound.
    pub epoch_len: u64,
}

/// Epoch-partition lower bound for any policy whose allocations stay in
/// `[a, a + delta]` under coin-flip supply (`Bernoulli(1/2)`) and unit
/// demand. Total epoch supply is `Binomial(L, 1/2)`; an epoch whose supply
/// lands far enough above (below) the allocation band forces overflow
/// (stockout), and the three cases pick `L` to expose that event.
pub fn epoch_lower_bound(a: f64, delta: f64, m: f64) -> Result<EpochBound> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "allocation floor must be nonnegative, got {a}"
        )));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "capacity must be positive, got {m}"
        )));
    }

    if a < 0.5 - delta {
        let epoch_len = ceil_snapped((m + 1.0) / (0.5 - a - delta)) as u64;
        return Ok(EpochBound {
            case: EpochCase::UnderAllocation,
            w_lb: 0.5,
            v_lb: 0.0,
            epoch_len,
        });
    }
    if a > 0.5 {
        let epoch_len = ceil_snapped(1.0 / (a - 0.5)) as u64;
        return Ok(EpochBound {
            case: EpochCase::OverAllocation,
            w_lb: 0.0,
            v_lb: 0.5,
            epoch_len,
        });
    }
    if delta > 1.0 / 9.0 {
        return Err(Error::InvalidParameter(format!(
            "straddling case requires delta <= 1/9, got {delta}"
        )));
    }
    let mut epoch_len = ceil_snapped(8.0 * m / delta) as u64;
    if epoch_len % 2 == 1 {
        epoch_len += 1;
    }
    let t = ceil_snapped(epoch_len as f64 * delta) as u64 + 1;
    let v_lb = binomial_tail_exact(epoch_len, epoch_len / 2 + t);
    Ok(EpochBound {
        case: EpochCase::Straddling,
        w_lb: 0.0,
        v_lb,
        epoch_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: forward recurrence on the point masses.
    fn tail_by_recurrence(l: u64, threshold: u64) -> f64 {
        // p_j = C(l, j) / 2^l built up from p_0 = 2^-l via ratios.
        let mut terms = Vec::with_capacity(l as usize + 1);
        let mut p = (-(l as f64) * std::f64::consts::LN_2).exp();
        terms.push(p);
        for j in 0..l {
            p *= (l - j) as f64 / (j + 1) as f64;
            terms.push(p);
        }
        terms[threshold as usize..].iter().sum()
    }

    #[test]
    fn small_tail_examples() {
        // Pr(Bin(8) >= 5) = 93/256, bound = e^-2 / 15.
        let check = binomial_tail_bound(8, 1).unwrap();
        assert!((check.exact - 93.0 / 256.0).abs() < 1e-14);
        assert!((check.bound - (-2.0f64).exp() / 15.0).abs() < 1e-15);
        assert!(check.holds);

        // Pr(Bin(16) >= 10) = 14893/65536, bound = e^-4 / 15.
        let check = binomial_tail_bound(16, 2).unwrap();
        assert!((check.exact - 14893.0 / 65536.0).abs() < 1e-14);
        assert!((check.bound - (-4.0f64).exp() / 15.0).abs() < 1e-15);
        assert!(check.holds);
    }

    #[test]
    fn bound_holds_on_full_scan() {
        for l in (8..=200).step_by(2) {
            for t in 1..=(l / 8) {
                let check = binomial_tail_bound(l, t).unwrap();
                assert!(check.holds, "violated at l={l}, t={t}");
            }
        }
    }

    #[test]
    fn tail_matches_independent_recurrence() {
        for &(l, th) in &[(8u64, 5u64), (16, 10), (100, 60), (648, 397), (1000, 540)] {
            let a = binomial_tail_exact(l, th);
            let b = tail_by_recurrence(l, th);
            assert!(
                ((a - b) / b.max(1e-300)).abs() < 1e-12,
                "l={l} th={th}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn tail_degenerate_arguments() {
        assert_eq!(binomial_tail_exact(10, 11), 0.0);
        assert_eq!(binomial_tail_exact(10, 0), 1.0);
        assert!(binomial_tail_bound(9, 1).is_err());
        assert!(binomial_tail_bound(16, 0).is_err());
        assert!(binomial_tail_bound(16, 3).is_err()); // t > l/8
    }

    #[test]
    fn epoch_under_allocation() {
        let bound = epoch_lower_bound(0.2, 0.1, 10.0).unwrap();
        assert_eq!(bound.case, EpochCase::UnderAllocation);
        assert_eq!(bound.w_lb, 0.5);
        assert_eq!(bound.v_lb, 0.0);
        assert_eq!(bound.epoch_len, 55);
    }

    #[test]
    fn epoch_over_allocation() {
        let bound = epoch_lower_bound(0.6, 0.1, 10.0).unwrap();
        assert_eq!(bound.case, EpochCase::OverAllocation);
        assert_eq!(bound.v_lb, 0.5);
        assert_eq!(bound.w_lb, 0.0);
    }

    #[test]
    fn epoch_straddling_exact_tail() {
        let bound = epoch_lower_bound(0.5, 1.0 / 9.0, 9.0).unwrap();
        assert_eq!(bound.case, EpochCase::Straddling);
        assert_eq!(bound.epoch_len, 648);
        let expected = binomial_tail_exact(648, 324 + 73);
        assert!(bound.v_lb > 0.0);
        assert_eq!(bound.v_lb, expected);
        // And the independent recurrence agrees to full precision.
        let indep = tail_by_recurrence(648, 397);
        assert!(((bound.v_lb - indep) / indep).abs() < 1e-12);
    }

    #[test]
    fn epoch_rejects_large_delta_in_straddling_case() {
        assert!(epoch_lower_bound(0.5, 0.2, 10.0).is_err());
        // Large delta is fine in the other two cases.
        assert!(epoch_lower_bound(0.9, 0.2, 10.0).is_ok());
        assert!(epoch_lower_bound(0.1, 0.2, 10.0).is_ok());
    }
}
