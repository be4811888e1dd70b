//! Theoretical oracles and Monte Carlo estimators that cross-validate the
//! simulation: birth-death stationary distributions, hitting-time and
//! boundary-return estimation on the unreflected walk, the renewal-reward
//! identity for boundary occupancy, exact binomial tails with the epoch
//! lower-bound construction, and drift feasibility checks.

mod birth_death;
mod feasibility;
mod hitting;
mod linalg;
mod tails;

pub use birth_death::{
    birth_death_stationary_closed_form, birth_death_stationary_solve, BirthDeathChain,
};
pub use feasibility::{
    check_delta_feasible, drift_moments, supermartingale_mgf_check, DriftMoments,
    FeasibilityMethod, FeasibilityReport, MgfCheck,
};
pub use hitting::{
    boundary_hitting_stats, estimate_hitting, estimate_interval_exit, renewal_identity,
    renewal_identity_with_se, ExitEstimate, HittingStats, DEFAULT_STEP_BUDGET,
};
pub use linalg::solve_linear_system;
pub use tails::{
    binomial_tail_bound, binomial_tail_exact, epoch_lower_bound, ln_binomial, EpochBound,
    EpochCase, TailBoundCheck,
};
