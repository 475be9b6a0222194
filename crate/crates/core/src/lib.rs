//! Common-pool resource (fishery) simulation with independent learners.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: stock dynamics, harvest and revenue of the shared fishery.
//! - [`signal`]: the periodic one-hot environmental signal.
//! - [`analytics`]: closed-form sustainability limits, growth-rate bounds and
//!   the max-effort baseline.
//! - [`control`]: the single-owner bang-bang harvesting problem, solved by a
//!   forward-backward adjoint sweep and checked by exhaustive enumeration.
//! - [`learner`]: per-agent MLP policies trained with PPO.
//! - [`metrics`]: welfare, fairness, CIC, convergence and significance tests.
//! - [`harness`]: trials, experiment grids, persistence and replay.

pub mod analytics;
pub mod control;
pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod signal;

pub use error::{Error, Result};
