//! Exact store dynamics: the reflected inventory walk, its waste/stockout
//! accounting, the unreflected coupled walk used by the analysis estimators,
//! and the multi-resource virtual-store variant.

use crate::error::{Error, Result};

/// Single-resource store contents. The level always lies in `[0, capacity]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InventoryState {
    pub level: f64,
    pub capacity: f64,
    pub round: u64,
}

impl InventoryState {
    pub fn new(capacity: f64, initial_level: f64) -> Result<Self> {
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "capacity must be positive and finite, got {capacity}"
            )));
        }
        if !(0.0..=capacity).contains(&initial_level) {
            return Err(Error::InvalidParameter(format!(
                "initial level {initial_level} outside [0, {capacity}]"
            )));
        }
        Ok(Self {
            level: initial_level,
            capacity,
            round: 0,
        })
    }
}

/// Per-round outcome of one store update.
///
/// For multi-resource runs one record is emitted per resource; there
/// `demand` is the total agent count and `allocation` the mean per-agent
/// drawdown of that resource.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub allocation: f64,
    pub budget: f64,
    pub demand: f64,
    /// Signed pre-clamp inventory change `B - N*A`.
    pub drift: f64,
    /// Amount discarded because the post-allocation level exceeded capacity.
    pub waste: f64,
    /// Amount acquired from the outside option to honor the allocation.
    pub stockout: f64,
    /// Post-update level sits exactly at capacity.
    pub at_upper: bool,
    /// Post-update level sits exactly at zero.
    pub at_lower: bool,
}

fn clamp_update(level: f64, capacity: f64, drift: f64) -> (f64, f64, f64) {
    let x = level + drift;
    if x > capacity {
        (capacity, x - capacity, 0.0)
    } else if x < 0.0 {
        (0.0, 0.0, -x)
    } else {
        (x, 0.0, 0.0)
    }
}

/// Advance the store one round: clamp `S + B - N*A` into `[0, M]`, recording
/// the overflow (waste) and the shortfall (stockout).
pub fn step(
    state: InventoryState,
    budget: f64,
    demand: f64,
    allocation: f64,
) -> (InventoryState, StepRecord) {
    let drift = budget - demand * allocation;
    let (level, waste, stockout) = clamp_update(state.level, state.capacity, drift);
    let next = InventoryState {
        level,
        capacity: state.capacity,
        round: state.round + 1,
    };
    let record = StepRecord {
        allocation,
        budget,
        demand,
        drift,
        waste,
        stockout,
        at_upper: level == state.capacity,
        at_lower: level == 0.0,
    };
    (next, record)
}

/// One step of the unreflected walk coupled to the store: no clamping.
pub fn step_unreflected(q: f64, drift: f64) -> f64 {
    q + drift
}

/// Multi-resource state: resource `k` lives in its own virtual store with
/// cap `virtual_caps[k]`, so the aggregate level never exceeds the total
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiInventoryState {
    pub levels: Vec<f64>,
    pub virtual_caps: Vec<f64>,
    pub round: u64,
}

impl MultiInventoryState {
    pub fn new(virtual_caps: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if virtual_caps.is_empty() || virtual_caps.len() != levels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} caps vs {} levels",
                virtual_caps.len(),
                levels.len()
            )));
        }
        for (k, (&cap, &lvl)) in virtual_caps.iter().zip(&levels).enumerate() {
            if !(cap > 0.0) || !cap.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "virtual cap {k} must be positive, got {cap}"
                )));
            }
            if !(0.0..=cap).contains(&lvl) {
                return Err(Error::InvalidParameter(format!(
                    "level {lvl} of store {k} outside [0, {cap}]"
                )));
            }
        }
        Ok(Self {
            levels,
            virtual_caps,
            round: 0,
        })
    }

    /// Equal split of a total capacity over `k` virtual stores, each starting
    /// at half its cap.
    pub fn split_evenly(total_capacity: f64, k: usize, initial_total: f64) -> Result<Self> {
        let cap = total_capacity / k as f64;
        let level = initial_total / k as f64;
        Self::new(vec![cap; k], vec![level; k])
    }
}

/// Advance every virtual store one round. `allocations[theta][k]` is the
/// per-agent allocation of resource `k` to type `theta`; store `k` sees the
/// aggregate drawdown over types and clamps against its own cap.
pub fn step_multi(
    state: &MultiInventoryState,
    budgets: &[f64],
    demand_by_type: &[f64],
    allocations: &[Vec<f64>],
) -> Result<(MultiInventoryState, Vec<StepRecord>)> {
    let k = state.levels.len();
    if budgets.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} budgets for {k} resources",
            budgets.len()
        )));
    }
    if allocations.len() != demand_by_type.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} allocation rows for {} types",
            allocations.len(),
            demand_by_type.len()
        )));
    }
    for row in allocations {
        if row.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "allocation row has {} entries for {k} resources",
                row.len()
            )));
        }
    }

    let total_demand: f64 = demand_by_type.iter().sum();
    let mut levels = Vec::with_capacity(k);
    let mut records = Vec::with_capacity(k);
    for res in 0..k {
        let drawdown: f64 = demand_by_type
            .iter()
            .zip(allocations)
            .map(|(n, row)| n * row[res])
            .sum();
        let drift = budgets[res] - drawdown;
        let cap = state.virtual_caps[res];
        let (level, waste, stockout) = clamp_update(state.levels[res], cap, drift);
        levels.push(level);
        records.push(StepRecord {
            allocation: if total_demand > 0.0 {
                drawdown / total_demand
            } else {
                0.0
            },
            budget: budgets[res],
            demand: total_demand,
            drift,
            waste,
            stockout,
            at_upper: level == cap,
            at_lower: level == 0.0,
        });
    }
    let next = MultiInventoryState {
        levels,
        virtual_caps: state.virtual_caps.clone(),
        round: state.round + 1,
    };
    Ok((next, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RngStream;
    use rand::Rng;

    fn state(m: f64, s: f64) -> InventoryState {
        InventoryState::new(m, s).unwrap()
    }

    #[test]
    fn step_hits_cap_exactly() {
        let (next, rec) = step(state(10.0, 9.0), 3.0, 2.0, 1.0);
        assert_eq!(next.level, 10.0);
        assert_eq!(rec.waste, 0.0);
        assert_eq!(rec.stockout, 0.0);
        assert!(rec.at_upper);
    }

    #[test]
    fn step_overflows() {
        let (next, rec) = step(state(10.0, 9.0), 4.0, 1.0, 1.0);
        assert_eq!(next.level, 10.0);
        assert_eq!(rec.waste, 2.0);
        assert_eq!(rec.stockout, 0.0);
        assert!(rec.at_upper && !rec.at_lower);
    }

    #[test]
    fn step_stocks_out() {
        let (next, rec) = step(state(10.0, 1.0), 0.0, 2.0, 1.0);
        assert_eq!(next.level, 0.0);
        assert_eq!(rec.waste, 0.0);
        assert_eq!(rec.stockout, 1.0);
        assert!(rec.at_lower && !rec.at_upper);
    }

    #[test]
    fn unreflected_step() {
        assert_eq!(step_unreflected(5.0, -2.0), 3.0);
        assert_eq!(step_unreflected(0.0, 0.0), 0.0);
    }

    #[test]
    fn step_random_inputs_keep_invariants() {
        let mut rng = RngStream::new(99, 0);
        for _ in 0..100_000 {
            let m = 1.0 + rng.gen::<f64>() * 99.0;
            let s = rng.gen::<f64>() * m;
            let b = rng.gen::<f64>() * 12.0;
            let n = (rng.gen::<f64>() * 10.0).floor();
            let a = rng.gen::<f64>() * 2.0;
            let (next, rec) = step(state(m, s), b, n, a);
            assert!(next.level >= 0.0 && next.level <= m);
            assert!(rec.waste >= 0.0 && rec.stockout >= 0.0);
            assert_eq!(rec.waste * rec.stockout, 0.0);
            // Conservation, recomputed with the same arithmetic sequence.
            // Exact except for one rounding when the update overshoots the
            // cap by more than the cap itself.
            let expected = s + rec.drift - rec.waste + rec.stockout;
            let ulp = 4.0 * f64::EPSILON * (s + b).abs().max(1.0);
            assert!(
                (next.level - expected).abs() <= ulp,
                "conservation broke: {} vs {expected}",
                next.level
            );
            if rec.waste > 0.0 {
                assert!(rec.at_upper);
            }
            if rec.stockout > 0.0 {
                assert!(rec.at_lower);
            }
            // Path-wise sandwich bounds, with boundary indicators as stated.
            let tol = 1e-9;
            assert!(rec.waste <= rec.drift.max(0.0) * (rec.at_upper as u8 as f64) + tol);
            assert!(rec.stockout <= (-rec.drift).max(0.0) * (rec.at_lower as u8 as f64) + tol);
            if s == m {
                assert!((rec.waste - rec.drift.max(0.0)).abs() <= tol);
            }
            if s == 0.0 {
                assert!((rec.stockout - (-rec.drift).max(0.0)).abs() <= tol);
            }
        }
    }

    #[test]
    fn unreflected_walk_couples_until_exit() {
        // The two walks share increments, so they agree until the reflected
        // walk first leaves the open interval (0, M).
        let mut rng = RngStream::new(4242, 1);
        for path in 0..10_000 {
            let m = 4.0 + rng.gen::<f64>() * 26.0;
            let mut s = state(m, m / 2.0);
            let mut q = m / 2.0;
            let delta = rng.gen::<f64>() * 0.4;
            for _t in 0..200 {
                let alloc = if s.level < m / 2.0 {
                    1.0 - delta / 2.0
                } else {
                    1.0 + delta / 2.0
                };
                let b = rng.gen::<f64>() * 10.0;
                let n = (rng.gen::<f64>() * 10.0).floor();
                let (next, rec) = step(s, b, n, alloc);
                q = step_unreflected(q, rec.drift);
                if q <= 0.0 || q >= m {
                    break;
                }
                assert_eq!(next.level, q, "decoupled on path {path}");
                s = next;
            }
        }
    }

    #[test]
    fn step_multi_per_store_arithmetic() {
        let st = MultiInventoryState::new(vec![5.0, 5.0], vec![5.0, 2.0]).unwrap();
        // drawdown (1,1) via one type with N=1 and allocation row (1,1)
        let (next, recs) = step_multi(&st, &[2.0, 0.0], &[1.0], &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(next.levels, vec![5.0, 1.0]);
        assert_eq!(recs[0].waste, 1.0);
        assert_eq!(recs[1].waste, 0.0);
        assert_eq!(recs[0].stockout, 0.0);
        assert_eq!(recs[1].stockout, 0.0);

        let st = MultiInventoryState::new(vec![5.0, 5.0], vec![0.0, 5.0]).unwrap();
        let (next, recs) = step_multi(&st, &[0.0, 3.0], &[1.0], &[vec![2.0, 0.0]]).unwrap();
        assert_eq!(next.levels, vec![0.0, 5.0]);
        assert_eq!((recs[0].waste, recs[1].waste), (0.0, 3.0));
        assert_eq!((recs[0].stockout, recs[1].stockout), (2.0, 0.0));
    }

    #[test]
    fn step_multi_with_one_store_reduces_to_step() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..10_000 {
            let m = 1.0 + rng.gen::<f64>() * 20.0;
            let s = rng.gen::<f64>() * m;
            let b = rng.gen::<f64>() * 10.0;
            let n = (rng.gen::<f64>() * 5.0).floor();
            let a = rng.gen::<f64>() * 2.0;
            let (single, rec) = step(state(m, s), b, n, a);
            let multi = MultiInventoryState::new(vec![m], vec![s]).unwrap();
            let (next, recs) = step_multi(&multi, &[b], &[n], &[vec![a]]).unwrap();
            assert_eq!(next.levels[0], single.level);
            assert_eq!(recs[0].waste, rec.waste);
            assert_eq!(recs[0].stockout, rec.stockout);
            assert_eq!(recs[0].drift, rec.drift);
        }
    }

    #[test]
    fn step_multi_dimension_mismatch() {
        let st = MultiInventoryState::new(vec![5.0, 5.0], vec![1.0, 1.0]).unwrap();
        assert!(step_multi(&st, &[1.0], &[1.0], &[vec![1.0, 1.0]]).is_err());
        assert!(step_multi(&st, &[1.0, 1.0], &[1.0], &[vec![1.0]]).is_err());
        assert!(step_multi(&st, &[1.0, 1.0], &[1.0, 2.0], &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn aggregate_level_bounded_by_total_capacity() {
        let mut rng = RngStream::new(6, 0);
        let mut st = MultiInventoryState::split_evenly(20.0, 4, 10.0).unwrap();
        for _ in 0..5000 {
            let budgets: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 3.0).collect();
            let demand = [(rng.gen::<f64>() * 4.0).floor()];
            let alloc = vec![(0..4).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>()];
            let (next, _) = step_multi(&st, &budgets, &demand, &alloc).unwrap();
            assert!(next.levels.iter().sum::<f64>() <= 20.0 + 1e-12);
            st = next;
        }
    }
}
