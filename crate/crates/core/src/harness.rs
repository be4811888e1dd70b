//! Experiment orchestration: seeded replications, capacity/fairness grid
//! sweeps with cell-level aggregation, scaling-law fits, and the CSV
//! formats the CLI emits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ResolvedEnv};
use crate::env::{derive_stream_id, DistributionSpec, RngStream};
use crate::error::{Error, Result};
use crate::inventory::{step, step_multi, InventoryState, MultiInventoryState};
use crate::metrics::{RunAccumulator, RunSummary};
use crate::policy::{Policy, PolicyEnv};

/// Plotting floor applied to the `delta_eff_plot` column only; raw
/// statistics are never floored.
pub const PLOT_FLOOR: f64 = 1e-4;

/// One aggregated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub delta: f64,
    pub delta_eff_mean: f64,
    pub delta_eff_se: f64,
    pub w_bar_mean: f64,
    pub v_bar_mean: f64,
    pub delta_fair_mean: f64,
    pub h_m_mean: f64,
    pub h_0_mean: f64,
    /// `max(delta_eff_mean, PLOT_FLOOR)`.
    pub delta_eff_plot: f64,
    pub reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub m: f64,
    pub delta: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Cells that could not run (e.g. a fairness target out of range for the
    /// policy); reported rather than fatal.
    pub failures: Vec<CellFailure>,
}

/// Per-round trace row for `simulate --trace`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: u64,
    pub level: f64,
    pub budget: f64,
    pub demand: f64,
    pub allocation: f64,
    pub drift: f64,
    pub waste: f64,
    pub stockout: f64,
    pub at_upper: bool,
    pub at_lower: bool,
}

fn stream_for(seed: u64, replication: u64, m: f64, delta: f64, role: u64) -> RngStream {
    RngStream::new(
        seed,
        derive_stream_id(&[replication, m.to_bits(), delta.to_bits(), role]),
    )
}

/// Run one replication of a grid cell. Deterministic in
/// `(seed, replication, m, delta)` regardless of execution order.
pub fn run_replication(
    config: &ExperimentConfig,
    m: f64,
    delta: f64,
    replication: u64,
) -> Result<RunSummary> {
    Ok(run_replication_impl(config, m, delta, replication, None)?.0)
}

/// As `run_replication`, also materializing the per-round trace.
pub fn trace_replication(
    config: &ExperimentConfig,
    m: f64,
    delta: f64,
    replication: u64,
) -> Result<(RunSummary, Vec<TraceRow>)> {
    let mut trace = Vec::with_capacity(config.horizon as usize);
    let (summary, _) = run_replication_impl(config, m, delta, replication, Some(&mut trace))?;
    Ok((summary, trace))
}

fn run_replication_impl(
    config: &ExperimentConfig,
    m: f64,
    delta: f64,
    replication: u64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<(RunSummary, ())> {
    let spec = config.policy.with_delta(delta)?;
    let env = config.env.resolved()?;
    let initial = config.initial_level.unwrap_or(m / 2.0);
    if !(0.0..=m).contains(&initial) {
        return Err(Error::InvalidConfig(format!(
            "initial level {initial} outside [0, {m}]"
        )));
    }
    match env {
        ResolvedEnv::Single { supply, demand } => {
            let policy = Policy::build(&spec, &PolicyEnv::Single { supply, demand }, m)?;
            run_single(
                config, &policy, supply, demand, m, delta, initial, replication, trace,
            )
        }
        ResolvedEnv::Multi {
            supplies,
            demand_by_type,
            weights,
        } => {
            let policy = Policy::build(
                &spec,
                &PolicyEnv::Multi {
                    supplies,
                    demand_by_type,
                },
                m,
            )?;
            if trace.is_some() {
                return Err(Error::InvalidConfig(
                    "per-round traces are only emitted for single-resource runs".into(),
                ));
            }
            run_multi(
                config,
                &policy,
                supplies,
                demand_by_type,
                weights,
                m,
                delta,
                initial,
                replication,
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_single(
    config: &ExperimentConfig,
    policy: &Policy,
    supply: &DistributionSpec,
    demand: &DistributionSpec,
    m: f64,
    delta: f64,
    initial: f64,
    replication: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<(RunSummary, ())> {
    let mut rng_b = stream_for(config.seed, replication, m, delta, 0);
    let mut rng_n = stream_for(config.seed, replication, m, delta, 1);
    let mut state = InventoryState::new(m, initial)?;
    let mut acc = RunAccumulator::new(initial == m, initial == 0.0);
    for t in 0..config.horizon {
        let budget = supply.sample(&mut rng_b, t);
        let demand_count = demand.sample(&mut rng_n, t);
        let decision = policy.decide(state.level, budget, demand_count);
        if decision.clamped {
            acc.add_clamp_warnings(1);
        }
        let (next, record) = step(state, budget, demand_count, decision.allocation);
        acc.accumulate(&record);
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                round: t,
                level: next.level,
                budget,
                demand: demand_count,
                allocation: decision.allocation,
                drift: record.drift,
                waste: record.waste,
                stockout: record.stockout,
                at_upper: record.at_upper,
                at_lower: record.at_lower,
            });
        }
        state = next;
    }
    Ok((acc.finalize(config.costs.h, config.costs.b), ()))
}

#[allow(clippy::too_many_arguments)]
fn run_multi(
    config: &ExperimentConfig,
    policy: &Policy,
    supplies: &[DistributionSpec],
    demand_by_type: &[DistributionSpec],
    weights: &[Vec<f64>],
    m: f64,
    delta: f64,
    initial: f64,
    replication: u64,
) -> Result<(RunSummary, ())> {
    let k = supplies.len();
    let mut supply_streams: Vec<RngStream> = (0..k)
        .map(|res| stream_for(config.seed, replication, m, delta, 2 + res as u64))
        .collect();
    let mut demand_streams: Vec<RngStream> = (0..demand_by_type.len())
        .map(|theta| stream_for(config.seed, replication, m, delta, 2 + k as u64 + theta as u64))
        .collect();
    let mut state = MultiInventoryState::split_evenly(m, k, initial)?;
    let mut acc =
        RunAccumulator::new(false, false).with_multi_envy(weights.to_vec())?;
    let mut budgets = vec![0.0; k];
    let mut demands = vec![0.0; demand_by_type.len()];
    for t in 0..config.horizon {
        for (res, spec) in supplies.iter().enumerate() {
            budgets[res] = spec.sample(&mut supply_streams[res], t);
        }
        for (theta, spec) in demand_by_type.iter().enumerate() {
            demands[theta] = spec.sample(&mut demand_streams[theta], t);
        }
        let decision = policy.decide_multi(&state.levels)?;
        acc.add_clamp_warnings(decision.clamps);
        let (next, records) = step_multi(&state, &budgets, &demands, &decision.allocations)?;
        acc.accumulate_multi(&records, &decision.allocations, &demands)?;
        state = next;
    }
    Ok((acc.finalize_with_stores(config.costs.h, config.costs.b, k), ()))
}

/// Evaluate every `(m, delta)` grid cell over the configured replications.
/// Cells are independent; aggregation is a pure reduction so results do not
/// depend on execution order or parallelism.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let deltas = config.delta_grid();
    let cells: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| config.grid.m.iter().map(move |&m| (m, d)))
        .collect();
    let reps = config.replications;

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|cell| (0..reps).map(move |rep| (cell, rep)))
        .collect();
    let outcomes: Vec<(usize, Result<RunSummary>)> = jobs
        .par_iter()
        .map(|&(cell, rep)| {
            let (m, delta) = cells[cell];
            (cell, run_replication(config, m, delta, rep))
        })
        .collect();

    let mut per_cell: Vec<Vec<RunSummary>> = vec![Vec::new(); cells.len()];
    let mut failures: Vec<CellFailure> = Vec::new();
    for (cell, outcome) in outcomes {
        match outcome {
            Ok(summary) => per_cell[cell].push(summary),
            Err(err) => {
                let (m, delta) = cells[cell];
                if !failures.iter().any(|f| f.m == m && f.delta == delta) {
                    failures.push(CellFailure {
                        m,
                        delta,
                        error: err.to_string(),
                    });
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (cell, summaries) in per_cell.into_iter().enumerate() {
        if summaries.is_empty() {
            continue;
        }
        let (m, delta) = cells[cell];
        rows.push(aggregate_cell(m, delta, &summaries));
    }
    Ok(SweepResult { rows, failures })
}

fn aggregate_cell(m: f64, delta: f64, summaries: &[RunSummary]) -> SweepRow {
    let n = summaries.len() as f64;
    let mean = |f: &dyn Fn(&RunSummary) -> f64| summaries.iter().map(|s| f(s)).sum::<f64>() / n;
    let delta_eff_mean = mean(&|s| s.delta_eff);
    let var = summaries
        .iter()
        .map(|s| (s.delta_eff - delta_eff_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    SweepRow {
        m,
        delta,
        delta_eff_mean,
        delta_eff_se: (var / n).sqrt(),
        w_bar_mean: mean(&|s| s.w_bar),
        v_bar_mean: mean(&|s| s.v_bar),
        delta_fair_mean: mean(&|s| s.delta_fair),
        h_m_mean: mean(&|s| s.h_m),
        h_0_mean: mean(&|s| s.h_0),
        delta_eff_plot: delta_eff_mean.max(PLOT_FLOOR),
        reps: summaries.len() as u64,
    }
}

pub const SWEEP_CSV_HEADER: &str = "M,delta,delta_eff_mean,delta_eff_se,w_bar_mean,v_bar_mean,\
                                    delta_fair_mean,h_m_mean,h_0_mean,delta_eff_plot,reps";

/// Sweep rows as CSV, shortest round-trip float formatting (lossless).
pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.m,
            r.delta,
            r.delta_eff_mean,
            r.delta_eff_se,
            r.w_bar_mean,
            r.v_bar_mean,
            r.delta_fair_mean,
            r.h_m_mean,
            r.h_0_mean,
            r.delta_eff_plot,
            r.reps
        ));
    }
    out
}

pub fn sweep_from_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty sweep CSV".into()))?;
    if header != SWEEP_CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected sweep CSV header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected 11 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let f = |j: usize| -> Result<f64> {
            fields[j]
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", i + 2)))
        };
        rows.push(SweepRow {
            m: f(0)?,
            delta: f(1)?,
            delta_eff_mean: f(2)?,
            delta_eff_se: f(3)?,
            w_bar_mean: f(4)?,
            v_bar_mean: f(5)?,
            delta_fair_mean: f(6)?,
            h_m_mean: f(7)?,
            h_0_mean: f(8)?,
            delta_eff_plot: f(9)?,
            reps: fields[10]
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", i + 2)))?,
        });
    }
    Ok(SweepResult {
        rows,
        failures: Vec::new(),
    })
}

pub const TRACE_CSV_HEADER: &str =
    "round,level,budget,demand,allocation,drift,waste,stockout,at_upper,at_lower";

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.round,
            r.level,
            r.budget,
            r.demand,
            r.allocation,
            r.drift,
            r.waste,
            r.stockout,
            r.at_upper,
            r.at_lower
        ));
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str =
    "policy,M,delta,seed,T,w_bar,v_bar,delta_eff,delta_fair,h_m,h_0";

/// One summary row in the documented per-run CSV layout.
pub fn summary_csv_row(
    policy_kind: &str,
    m: f64,
    delta: f64,
    seed: u64,
    summary: &RunSummary,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        policy_kind,
        m,
        delta,
        seed,
        summary.horizon,
        summary.w_bar,
        summary.v_bar,
        summary.delta_eff,
        summary.delta_fair,
        summary.h_m,
        summary.h_0
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Fit `ln y` against `ln x`.
    LogLog,
    /// Fit `ln y` against `x`.
    LinLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Ordinary least squares on transformed coordinates. Rows with nonpositive
/// `y` (floored cells with no usable signal) are excluded; at least three
/// usable points are required.
pub fn fit_scaling(points: &[(f64, f64)], transform: Transform) -> Result<FitResult> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| {
            *y > 0.0 && y.is_finite() && x.is_finite() && (*x > 0.0 || transform == Transform::LinLog)
        })
        .map(|&(x, y)| match transform {
            Transform::LogLog => (x.ln(), y.ln()),
            Transform::LinLog => (x, y.ln()),
        })
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable points; need at least 3",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all x values identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = usable
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = usable.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        points_used: usable.len(),
    })
}
