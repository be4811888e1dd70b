//! Simulation engine and analysis toolkit for sequential fair allocation
//! under stochastic replenishments with a capacity-limited store.
//!
//! The engine simulates the reflected inventory walk under static and
//! bang-bang allocation policies, measures ex-post envy and inefficiency
//! (overflow + stockout costs), and cross-validates the simulation against
//! closed-form birth-death stationary distributions, renewal-reward
//! identities, martingale hitting-time bounds, and exact binomial tails.

pub mod analysis;
pub mod config;
pub mod eg;
pub mod env;
pub mod error;
pub mod harness;
pub mod inventory;
pub mod metrics;
pub mod policy;
pub mod verify;

pub use error::{Error, Result};
