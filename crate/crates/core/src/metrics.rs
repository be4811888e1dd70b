//! Streaming envy and inefficiency accounting over a trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::StepRecord;

/// Tracks the allocation extrema over rounds with positive demand; the
/// ex-post envy is their difference.
#[derive(Debug, Clone)]
pub struct EnvyTracker {
    min_alloc: f64,
    max_alloc: f64,
}

impl Default for EnvyTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl EnvyTracker {
    pub fn new() -> Self {
        Self {
            min_alloc: f64::INFINITY,
            max_alloc: f64::NEG_INFINITY,
        }
    }

    /// Rounds with zero demand never move the extrema.
    pub fn observe(&mut self, allocation: f64, demand: f64) {
        if demand > 0.0 {
            self.min_alloc = self.min_alloc.min(allocation);
            self.max_alloc = self.max_alloc.max(allocation);
        }
    }

    pub fn envy(&self) -> f64 {
        if self.max_alloc >= self.min_alloc {
            self.max_alloc - self.min_alloc
        } else {
            0.0
        }
    }
}

/// Multi-type envy per the weighted-utility definition: for every evaluating
/// type, compare the value it assigns to any emitted bundle against the value
/// of its own bundles. Streaming via per-type extrema.
#[derive(Debug, Clone)]
pub struct MultiEnvyTracker {
    weights: Vec<Vec<f64>>,
    own_min: Vec<f64>,
    own_max: Vec<f64>,
    all_min: Vec<f64>,
    all_max: Vec<f64>,
}

impl MultiEnvyTracker {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights[0].is_empty() {
            return Err(Error::InvalidParameter("empty weight table".into()));
        }
        let k = weights[0].len();
        for row in &weights {
            if row.len() != k {
                return Err(Error::DimensionMismatch("ragged weight table".into()));
            }
            if row.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidParameter(
                    "weights must be strictly positive".into(),
                ));
            }
        }
        let t = weights.len();
        Ok(Self {
            weights,
            own_min: vec![f64::INFINITY; t],
            own_max: vec![f64::NEG_INFINITY; t],
            all_min: vec![f64::INFINITY; t],
            all_max: vec![f64::NEG_INFINITY; t],
        })
    }

    /// Feed one round of type x resource bundles with the per-type demand.
    pub fn observe_round(
        &mut self,
        allocations: &[Vec<f64>],
        demand_by_type: &[f64],
    ) -> Result<()> {
        let types = self.weights.len();
        if allocations.len() != types || demand_by_type.len() != types {
            return Err(Error::DimensionMismatch(format!(
                "{} bundles / {} demands for {} types",
                allocations.len(),
                demand_by_type.len(),
                types
            )));
        }
        for (recipient, bundle) in allocations.iter().enumerate() {
            if demand_by_type[recipient] <= 0.0 {
                continue;
            }
            for evaluator in 0..types {
                let value: f64 = self.weights[evaluator]
                    .iter()
                    .zip(bundle)
                    .map(|(w, a)| w * a)
                    .sum();
                self.all_min[evaluator] = self.all_min[evaluator].min(value);
                self.all_max[evaluator] = self.all_max[evaluator].max(value);
                if evaluator == recipient {
                    self.own_min[evaluator] = self.own_min[evaluator].min(value);
                    self.own_max[evaluator] = self.own_max[evaluator].max(value);
                }
            }
        }
        Ok(())
    }

    pub fn envy(&self) -> f64 {
        let mut worst = 0.0f64;
        for t in 0..self.weights.len() {
            if self.own_max[t] < self.own_min[t] {
                continue; // type never received a bundle under positive demand
            }
            worst = worst
                .max(self.all_max[t] - self.own_min[t])
                .max(self.own_max[t] - self.all_min[t]);
        }
        worst
    }
}

/// Batch form of the multi-type envy over stored histories.
pub fn multi_envy(
    weights: &[Vec<f64>],
    allocation_history: &[Vec<Vec<f64>>],
    demand_history: &[Vec<f64>],
) -> Result<f64> {
    if allocation_history.len() != demand_history.len() {
        return Err(Error::DimensionMismatch(
            "allocation and demand histories differ in length".into(),
        ));
    }
    let mut tracker = MultiEnvyTracker::new(weights.to_vec())?;
    for (allocs, demand) in allocation_history.iter().zip(demand_history) {
        tracker.observe_round(allocs, demand)?;
    }
    Ok(tracker.envy())
}

/// Aggregated metrics for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub horizon: u64,
    /// Long-run average overflow per round.
    pub w_bar: f64,
    /// Long-run average stockout per round.
    pub v_bar: f64,
    /// `h * w_bar + b * v_bar`.
    pub delta_eff: f64,
    pub delta_fair: f64,
    /// Fraction of rounds the store sat exactly at capacity (for multi runs,
    /// averaged over virtual stores).
    pub h_m: f64,
    /// Fraction of rounds the store sat exactly at zero.
    pub h_0: f64,
    /// Rounds in which a policy branch value had to be clamped into
    /// `[0, a_max]`.
    pub clamp_warnings: u64,
    /// Largest realized positive / negative drift on the path (path-wise
    /// stand-ins for the drift bounds when supports are unbounded).
    pub max_pos_drift: f64,
    pub max_neg_drift: f64,
    /// Rounds violating the path-wise overflow/stockout sandwich (should be
    /// zero on every run).
    pub sandwich_violations: u64,
}

/// Streaming accumulator for a single replication.
#[derive(Debug, Clone)]
pub struct RunAccumulator {
    rounds: u64,
    sum_waste: f64,
    sum_stockout: f64,
    rounds_at_upper: u64,
    rounds_at_lower: u64,
    envy: EnvyTracker,
    multi_envy: Option<MultiEnvyTracker>,
    clamp_warnings: u64,
    max_pos_drift: f64,
    max_neg_drift: f64,
    sandwich_violations: u64,
    prev_at_upper: bool,
    prev_at_lower: bool,
}

const SANDWICH_TOL: f64 = 1e-9;

impl RunAccumulator {
    /// `initial_at_upper`/`initial_at_lower` describe `S_0`, which the
    /// path-wise lower bounds condition on.
    pub fn new(initial_at_upper: bool, initial_at_lower: bool) -> Self {
        Self {
            rounds: 0,
            sum_waste: 0.0,
            sum_stockout: 0.0,
            rounds_at_upper: 0,
            rounds_at_lower: 0,
            envy: EnvyTracker::new(),
            multi_envy: None,
            clamp_warnings: 0,
            max_pos_drift: 0.0,
            max_neg_drift: 0.0,
            sandwich_violations: 0,
            prev_at_upper: initial_at_upper,
            prev_at_lower: initial_at_lower,
        }
    }

    pub fn with_multi_envy(mut self, weights: Vec<Vec<f64>>) -> Result<Self> {
        self.multi_envy = Some(MultiEnvyTracker::new(weights)?);
        Ok(self)
    }

    pub fn add_clamp_warnings(&mut self, n: u64) {
        self.clamp_warnings += n;
    }

    /// Fold one round's record into the running sums. Envy extrema move only
    /// on rounds with positive demand.
    pub fn accumulate(&mut self, record: &StepRecord) {
        self.rounds += 1;
        self.sum_waste += record.waste;
        self.sum_stockout += record.stockout;
        self.rounds_at_upper += record.at_upper as u64;
        self.rounds_at_lower += record.at_lower as u64;
        self.envy.observe(record.allocation, record.demand);
        self.max_pos_drift = self.max_pos_drift.max(record.drift);
        self.max_neg_drift = self.max_neg_drift.max(-record.drift);

        // Path-wise sandwich: overflow happens only at the upper boundary and
        // is bounded by the realized drift; equality when the round started
        // there. Symmetric for stockouts.
        let pos = record.drift.max(0.0);
        let neg = (-record.drift).max(0.0);
        let upper_ok = record.waste <= pos * (record.at_upper as u8 as f64) + SANDWICH_TOL
            && record.waste + SANDWICH_TOL >= pos * (self.prev_at_upper as u8 as f64);
        let lower_ok = record.stockout <= neg * (record.at_lower as u8 as f64) + SANDWICH_TOL
            && record.stockout + SANDWICH_TOL >= neg * (self.prev_at_lower as u8 as f64);
        if !upper_ok || !lower_ok {
            self.sandwich_violations += 1;
        }
        self.prev_at_upper = record.at_upper;
        self.prev_at_lower = record.at_lower;
    }

    /// Fold one multi-resource round (per-resource records plus the bundle
    /// matrix actually emitted).
    pub fn accumulate_multi(
        &mut self,
        records: &[StepRecord],
        allocations: &[Vec<f64>],
        demand_by_type: &[f64],
    ) -> Result<()> {
        self.rounds += 1;
        let stores = records.len() as f64;
        let mut upper = 0u64;
        let mut lower = 0u64;
        for record in records {
            self.sum_waste += record.waste;
            self.sum_stockout += record.stockout;
            upper += record.at_upper as u64;
            lower += record.at_lower as u64;
            self.max_pos_drift = self.max_pos_drift.max(record.drift);
            self.max_neg_drift = self.max_neg_drift.max(-record.drift);
        }
        // Occupancy counts average the per-store indicators so H stays in [0,1].
        self.rounds_at_upper += upper;
        self.rounds_at_lower += lower;
        if let Some(tracker) = self.multi_envy.as_mut() {
            tracker.observe_round(allocations, demand_by_type)?;
        }
        let _ = stores;
        Ok(())
    }

    fn stores_per_round(&self) -> f64 {
        1.0
    }

    /// Finite-horizon averages with per-unit overflow cost `h` and stockout
    /// cost `b`.
    pub fn finalize(&self, h: f64, b: f64) -> RunSummary {
        self.finalize_with_stores(h, b, 1)
    }

    /// Multi-resource finalize: waste/stockout sums run over all stores while
    /// the boundary occupancy is averaged per store.
    pub fn finalize_with_stores(&self, h: f64, b: f64, stores: usize) -> RunSummary {
        let t = self.rounds.max(1) as f64;
        let w_bar = self.sum_waste / t;
        let v_bar = self.sum_stockout / t;
        let denom = t * stores as f64;
        let delta_fair = match &self.multi_envy {
            Some(tracker) => tracker.envy(),
            None => self.envy.envy(),
        };
        let _ = self.stores_per_round();
        RunSummary {
            horizon: self.rounds,
            w_bar,
            v_bar,
            delta_eff: h * w_bar + b * v_bar,
            delta_fair,
            h_m: self.rounds_at_upper as f64 / denom,
            h_0: self.rounds_at_lower as f64 / denom,
            clamp_warnings: self.clamp_warnings,
            max_pos_drift: self.max_pos_drift,
            max_neg_drift: self.max_neg_drift,
            sandwich_violations: self.sandwich_violations,
        }
    }
}
