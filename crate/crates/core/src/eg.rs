//! Fluid Eisenberg-Gale solver: maximize population-weighted log utilities
//! subject to expected-budget constraints, producing the type-specific
//! baseline allocations used by the EG-centered bang-bang policy.
//!
//! The program maps onto a linear Fisher market (types are buyers with
//! budgets equal to their arrival-rate means, resources are goods with the
//! supply means as endowments), which proportional-response dynamics solve;
//! the market prices certify the KKT conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An instance of the fluid program: strictly positive preference weights
/// per (type, resource), type arrival-rate means, and supply means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgInstance {
    pub weights: Vec<Vec<f64>>,
    pub type_means: Vec<f64>,
    pub supply_means: Vec<f64>,
}

impl EgInstance {
    pub fn new(
        weights: Vec<Vec<f64>>,
        type_means: Vec<f64>,
        supply_means: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            weights,
            type_means,
            supply_means,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let types = self.weights.len();
        let resources = self.supply_means.len();
        if types == 0 || resources == 0 {
            return Err(Error::InvalidParameter("empty EG instance".into()));
        }
        if self.type_means.len() != types {
            return Err(Error::DimensionMismatch(format!(
                "{} type means for {} weight rows",
                self.type_means.len(),
                types
            )));
        }
        for row in &self.weights {
            if row.len() != resources {
                return Err(Error::DimensionMismatch(format!(
                    "weight row has {} entries for {} resources",
                    row.len(),
                    resources
                )));
            }
            if row.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidParameter(
                    "weights must be strictly positive".into(),
                ));
            }
        }
        if self.type_means.iter().any(|m| !(*m > 0.0))
            || self.supply_means.iter().any(|m| !(*m > 0.0))
        {
            return Err(Error::InvalidParameter(
                "type and supply means must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn types(&self) -> usize {
        self.weights.len()
    }

    pub fn resources(&self) -> usize {
        self.supply_means.len()
    }

    /// Bundled food-bank instance: five resources (cereal, pasta, prepared
    /// meals, rice, meat), three types (omnivore, vegetarian, prepared-only)
    /// with market-price weights, and type means (1.25, 1.5, 2.25).
    pub fn food_bank() -> Self {
        Self {
            weights: vec![
                vec![3.9, 3.0, 2.8, 2.7, 1.9],
                vec![3.9, 3.0, 0.1, 2.7, 0.1],
                vec![3.9, 3.0, 2.8, 2.7, 0.1],
            ],
            type_means: vec![1.25, 1.5, 2.25],
            supply_means: vec![5.0; 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgSolution {
    /// Per-agent allocations, type x resource.
    pub allocations: Vec<Vec<f64>>,
    /// Per-resource shadow prices certifying optimality.
    pub dual_prices: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: u64,
}

/// Per-condition worst violations of the optimality system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementary_slackness)
    }
}

/// Allocations below this are treated as inactive for the stationarity test.
const ACTIVITY_TOL: f64 = 1e-9;

/// Verify a candidate solution: stationarity (`w_{t,k} / (w_t . a_t)` equals
/// the price on active entries, is dominated by it on zero entries), primal
/// and dual feasibility, and complementary slackness on the budgets.
pub fn check_kkt(
    instance: &EgInstance,
    allocations: &[Vec<f64>],
    prices: &[f64],
) -> Result<KktReport> {
    instance.validate()?;
    let types = instance.types();
    let resources = instance.resources();
    if allocations.len() != types
        || allocations.iter().any(|r| r.len() != resources)
        || prices.len() != resources
    {
        return Err(Error::DimensionMismatch(
            "solution dimensions do not match the instance".into(),
        ));
    }

    let mut stationarity = 0.0f64;
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut slack = 0.0f64;

    for price in prices {
        dual = dual.max(-price);
    }
    for k in 0..resources {
        let used: f64 = (0..types)
            .map(|t| instance.type_means[t] * allocations[t][k])
            .sum();
        primal = primal.max(used - instance.supply_means[k]);
        slack = slack.max((prices[k] * (instance.supply_means[k] - used)).abs());
    }
    for t in 0..types {
        let utility: f64 = instance.weights[t]
            .iter()
            .zip(&allocations[t])
            .map(|(w, a)| w * a)
            .sum();
        if !(utility > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "type {t} has nonpositive utility; log objective undefined"
            )));
        }
        for k in 0..resources {
            let a = allocations[t][k];
            primal = primal.max(-a);
            let gradient = instance.weights[t][k] / utility;
            if a > ACTIVITY_TOL {
                stationarity = stationarity.max((gradient - prices[k]).abs());
            } else {
                stationarity = stationarity.max(gradient - prices[k]);
            }
        }
    }
    Ok(KktReport {
        stationarity: stationarity.max(0.0),
        primal_feasibility: primal.max(0.0),
        dual_feasibility: dual.max(0.0),
        complementary_slackness: slack,
    })
}

/// Objective value `sum_t mu_{N,t} log(w_t . a_t)`.
pub fn eg_objective(instance: &EgInstance, allocations: &[Vec<f64>]) -> f64 {
    instance
        .type_means
        .iter()
        .zip(&instance.weights)
        .zip(allocations)
        .map(|((mu, w), a)| {
            let u: f64 = w.iter().zip(a).map(|(w, a)| w * a).sum();
            mu * u.ln()
        })
        .sum()
}

const MAX_ITERATIONS: u64 = 2_000_000;

/// Solve the fluid program by proportional response, stopping once the KKT
/// residual reaches `tolerance`.
pub fn solve_fluid_eg(instance: &EgInstance, tolerance: f64) -> Result<EgSolution> {
    instance.validate()?;
    let types = instance.types();
    let resources = instance.resources();
    let budgets = &instance.type_means;
    let supplies = &instance.supply_means;

    // Bids start uniform; each round buyers split their budget in proportion
    // to the utility earned from each good.
    let mut bids = vec![vec![0.0f64; resources]; types];
    for (t, row) in bids.iter_mut().enumerate() {
        for bid in row.iter_mut() {
            *bid = budgets[t] / resources as f64;
        }
    }
    let mut x = vec![vec![0.0f64; resources]; types];
    let mut prices = vec![0.0f64; resources];

    let mut iterations = 0u64;
    loop {
        iterations += 1;
        for k in 0..resources {
            prices[k] = (0..types).map(|t| bids[t][k]).sum();
        }
        for t in 0..types {
            for k in 0..resources {
                x[t][k] = bids[t][k] / prices[k] * supplies[k];
            }
        }
        for t in 0..types {
            let utility: f64 = instance.weights[t]
                .iter()
                .zip(&x[t])
                .map(|(w, xv)| w * xv)
                .sum();
            for k in 0..resources {
                bids[t][k] = budgets[t] * instance.weights[t][k] * x[t][k] / utility;
            }
        }

        if iterations % 16 == 0 || iterations == 1 {
            let (allocations, unit_prices) = market_to_program(instance, &x, &prices);
            let report = check_kkt(instance, &allocations, &unit_prices)?;
            let residual = report.max_residual();
            if residual <= tolerance {
                return Ok(EgSolution {
                    allocations,
                    dual_prices: unit_prices,
                    kkt_residual: residual,
                    iterations,
                });
            }
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence(format!(
                "proportional response did not reach KKT residual {tolerance} \
                 within {MAX_ITERATIONS} iterations"
            )));
        }
    }
}

fn market_to_program(
    instance: &EgInstance,
    x: &[Vec<f64>],
    prices: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let allocations = x
        .iter()
        .zip(&instance.type_means)
        .map(|(row, mu)| row.iter().map(|v| v / mu).collect())
        .collect();
    let unit_prices = prices
        .iter()
        .zip(&instance.supply_means)
        .map(|(p, s)| p / s)
        .collect();
    (allocations, unit_prices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RngStream;
    use rand::Rng;

    #[test]
    fn single_type_exhausts_every_resource() {
        let inst = EgInstance::new(vec![vec![2.0, 1.0, 0.5]], vec![2.0], vec![4.0, 6.0, 2.0])
            .unwrap();
        let sol = solve_fluid_eg(&inst, 1e-8).unwrap();
        for k in 0..3 {
            let used = inst.type_means[0] * sol.allocations[0][k];
            assert!(
                (used - inst.supply_means[k]).abs() < 1e-7,
                "resource {k} not exhausted: {used}"
            );
        }
        assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn identical_weights_split_supply_by_population() {
        let w = vec![1.5, 2.5];
        let inst = EgInstance::new(
            vec![w.clone(), w.clone(), w],
            vec![1.0, 2.0, 3.0],
            vec![6.0, 12.0],
        )
        .unwrap();
        let sol = solve_fluid_eg(&inst, 1e-8).unwrap();
        let mu_n: f64 = inst.type_means.iter().sum();
        for t in 0..3 {
            for k in 0..2 {
                let expected = inst.supply_means[k] / mu_n;
                assert!(
                    (sol.allocations[t][k] - expected).abs() < 1e-6,
                    "a[{t}][{k}] = {} vs {expected}",
                    sol.allocations[t][k]
                );
            }
        }
        assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn disjoint_preferences_match_brute_force_grid() {
        let inst = EgInstance::new(
            vec![vec![1.0, 0.01], vec![0.01, 1.0]],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let sol = solve_fluid_eg(&inst, 1e-8).unwrap();

        // Brute force: both budget rows are tight at the optimum, so search
        // the share of each resource given to type 1 on a 1e-3 grid.
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let steps = 1000;
        for i in 0..=steps {
            for j in 0..=steps {
                let s1 = i as f64 / steps as f64;
                let s2 = j as f64 / steps as f64;
                let a = vec![vec![s1, s2], vec![1.0 - s1, 1.0 - s2]];
                if a.iter().any(|row| {
                    inst.weights[0]
                        .iter()
                        .zip(row)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
                        <= 0.0
                }) {
                    continue;
                }
                let obj = eg_objective(&inst, &a);
                if obj > best.0 {
                    best = (obj, s1, s2);
                }
            }
        }
        assert!((sol.allocations[0][0] - best.1).abs() < 1e-3);
        assert!((sol.allocations[0][1] - best.2).abs() < 1e-3);
        // Each type ends up with essentially its preferred resource.
        assert!(sol.allocations[0][0] > 0.99);
        assert!(sol.allocations[1][1] > 0.99);
        assert!(sol.allocations[0][1] < 0.01);
    }

    #[test]
    fn kkt_detects_perturbation() {
        let inst = EgInstance::food_bank();
        let sol = solve_fluid_eg(&inst, 1e-8).unwrap();
        let clean = check_kkt(&inst, &sol.allocations, &sol.dual_prices).unwrap();
        assert!(clean.max_residual() <= 1e-8);

        let mut perturbed = sol.allocations.clone();
        perturbed[0][0] += 0.1;
        let report = check_kkt(&inst, &perturbed, &sol.dual_prices).unwrap();
        assert!(report.max_residual() > 1e-3);
    }

    #[test]
    fn solution_beats_random_feasible_points() {
        let inst = EgInstance::food_bank();
        let sol = solve_fluid_eg(&inst, 1e-8).unwrap();
        let opt = eg_objective(&inst, &sol.allocations);
        let mut rng = RngStream::new(31, 0);
        let types = inst.types();
        for _ in 0..10_000 {
            // Random split of every resource across types.
            let mut a = vec![vec![0.0; inst.resources()]; types];
            for k in 0..inst.resources() {
                let mut shares: Vec<f64> = (0..types).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = shares.iter().sum();
                for (t, s) in shares.iter_mut().enumerate() {
                    *s /= total;
                    a[t][k] = *s * inst.supply_means[k] / inst.type_means[t];
                }
            }
            let obj = eg_objective(&inst, &a);
            assert!(obj <= opt + 1e-7, "random point beat the solver: {obj} > {opt}");
        }
    }

    #[test]
    fn weight_scaling_leaves_allocation_unchanged() {
        let base = EgInstance::food_bank();
        let mut scaled = base.clone();
        for w in scaled.weights[1].iter_mut() {
            *w *= 7.5;
        }
        let a = solve_fluid_eg(&base, 1e-9).unwrap();
        let b = solve_fluid_eg(&scaled, 1e-9).unwrap();
        for (ra, rb) in a.allocations.iter().zip(&b.allocations) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn budgets_tight_for_positive_weights() {
        for inst in [
            EgInstance::food_bank(),
            EgInstance::new(
                vec![vec![1.0, 0.01], vec![0.01, 1.0]],
                vec![1.0, 1.0],
                vec![1.0, 1.0],
            )
            .unwrap(),
        ] {
            let sol = solve_fluid_eg(&inst, 1e-8).unwrap();
            for k in 0..inst.resources() {
                let used: f64 = (0..inst.types())
                    .map(|t| inst.type_means[t] * sol.allocations[t][k])
                    .sum();
                assert!(
                    (used - inst.supply_means[k]).abs() < 1e-6,
                    "budget {k} slack: used {used} of {}",
                    inst.supply_means[k]
                );
            }
        }
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(EgInstance::new(vec![vec![1.0, 0.0]], vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(EgInstance::new(vec![vec![1.0]], vec![0.0], vec![1.0]).is_err());
    }
}
