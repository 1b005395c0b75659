//! Conditional vs. interventional behavior prediction on a two-car
//! intelligent-driver-model (IDM) system.
//!
//! The crate has three layers:
//!
//! - a stochastic simulator of two cars approaching a shared collision point
//!   ([`idm`]), together with the two estimators that tell "seeing" apart from
//!   "doing" ([`inference`]): likelihood weighting for the conditional
//!   distribution and graph-surgery rollouts for the interventional one;
//! - trajectory metrics ([`metrics`]) and a predictor contract with oracle
//!   implementations built on the simulator ([`predictors`]);
//! - an exact Shapley-value audit over query-trajectory segments
//!   ([`shapley`]) that detects predictors whose early predictions depend on
//!   late parts of the ego plan, plus a line protocol for auditing
//!   out-of-process predictors ([`extproto`]).
//!
//! The `ibp` binary and [`app`] wire these together into reproducible runs.
//! The `examples/` directory has one runnable program per capability.

pub mod app;
pub mod error;
pub mod extproto;
pub mod idm;
pub mod inference;
pub mod metrics;
pub mod predictors;
pub mod seed;
pub mod shapley;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use idm::{Agent, RightOfWay, RobotPlan};
pub use seed::{SeedKey, SeedRole};
pub use types::{AgentState, ApproachRate, IdmParams, SampleSet, Scenario, Trajectory};
