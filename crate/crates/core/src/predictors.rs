//! The predictor contract consumed by the Shapley audit, and oracle
//! predictors built directly on the simulator.
//!
//! - [`IbpOracle`] samples the interventional distribution. Its prediction at
//!   step `t` depends on the query plan only through steps `< t`.
//! - [`CbpOracle`] samples the conditional distribution (likelihood weighting
//!   followed by systematic resampling). It is leaky by construction: late
//!   plan steps reweight the whole human trajectory, early steps included.
//! - [`UnconditionedOracle`] ignores the query plan and samples the natural
//!   joint system. It doubles as the marginal sampler `q` for dropped plan
//!   segments.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idm::{self, RobotPlan};
use crate::inference::{self, EstimateWarning, LwOptions};
use crate::seed::{SeedKey, SeedRole};
use crate::types::{AgentState, SampleSet, Scenario, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalClaim {
    ClaimsInterventional,
    ClaimsConditional,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionQuery {
    pub scenario: Scenario,
    pub robot_future: RobotPlan,
    pub k: usize,
    pub seed: SeedKey,
}

impl PredictionQuery {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.robot_future.check_against(&self.scenario)?;
        if self.k == 0 {
            return Err(Error::Shape("query sample count k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that maps a query to `k` equally weighted human futures.
///
/// Implementations must be deterministic in `(query, seed)` and every returned
/// trajectory must start at the queried initial human state.
pub trait Predictor: Send + Sync {
    fn tag(&self) -> &str;

    fn causal_claim(&self) -> CausalClaim;

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet>;
}

pub type PredictorHandle = Arc<dyn Predictor>;

/// Source of robot futures used to replace dropped plan segments.
pub trait MarginalSampler: Send + Sync {
    fn sample_robot(&self, scenario: &Scenario, k: usize, seed: SeedKey) -> Result<Vec<RobotPlan>>;
}

/// Keeps the initial speed for the whole horizon.
#[derive(Debug, Clone, Default)]
pub struct ConstantVelocity;

pub fn constant_velocity_rollout(initial: AgentState, horizon: usize, dt: f64) -> Trajectory {
    let states = (0..=horizon)
        .map(|t| AgentState::new(initial.s - t as f64 * dt * initial.v, initial.v))
        .collect();
    Trajectory { states }
}

impl Predictor for ConstantVelocity {
    fn tag(&self) -> &str {
        "constant-velocity"
    }

    fn causal_claim(&self) -> CausalClaim {
        CausalClaim::ClaimsInterventional
    }

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet> {
        query.validate()?;
        let sc = &query.scenario;
        let t = constant_velocity_rollout(sc.human0, sc.horizon, sc.params.dt);
        SampleSet::uniform(vec![t; query.k])
    }
}

#[derive(Debug, Clone, Default)]
pub struct IbpOracle;

pub fn make_ibp_oracle() -> PredictorHandle {
    Arc::new(IbpOracle)
}

impl Predictor for IbpOracle {
    fn tag(&self) -> &str {
        "ibp-oracle"
    }

    fn causal_claim(&self) -> CausalClaim {
        CausalClaim::ClaimsInterventional
    }

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet> {
        query.validate()?;
        inference::interventional_mc(&query.scenario, &query.robot_future, query.k, query.seed)
    }
}

pub const DEFAULT_IMPORTANCE_FACTOR: usize = 20;

#[derive(Debug)]
pub struct CbpOracle {
    /// Importance samples drawn per returned sample.
    pub importance_factor: usize,
    pub ess_floor: f64,
    warnings: Mutex<WarningLog>,
}

/// Most recent warnings (bounded) plus a running count.
#[derive(Debug, Default)]
struct WarningLog {
    total: usize,
    recent: Vec<EstimateWarning>,
}

const WARNING_LOG_CAPACITY: usize = 64;

impl Default for CbpOracle {
    fn default() -> Self {
        Self {
            importance_factor: DEFAULT_IMPORTANCE_FACTOR,
            ess_floor: inference::DEFAULT_ESS_FLOOR,
            warnings: Mutex::new(WarningLog::default()),
        }
    }
}

pub fn make_cbp_oracle() -> Arc<CbpOracle> {
    Arc::new(CbpOracle::default())
}

impl CbpOracle {
    /// Up to the last 64 degenerate-evidence warnings raised by past queries.
    pub fn recent_warnings(&self) -> Vec<EstimateWarning> {
        self.warnings.lock().expect("warning log poisoned").recent.clone()
    }

    /// Number of queries that raised a warning.
    pub fn warned_queries(&self) -> usize {
        self.warnings.lock().expect("warning log poisoned").total
    }
}

impl Predictor for CbpOracle {
    fn tag(&self) -> &str {
        "cbp-oracle"
    }

    fn causal_claim(&self) -> CausalClaim {
        CausalClaim::ClaimsConditional
    }

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet> {
        query.validate()?;
        let n = self.importance_factor.max(1) * query.k;
        let estimate = inference::conditional_lw_with(
            &query.scenario,
            &query.robot_future,
            n,
            query.seed,
            LwOptions {
                ess_floor: self.ess_floor,
                ignore_evidence: false,
            },
        )?;
        if !estimate.warnings.is_empty() {
            let mut log = self.warnings.lock().expect("warning log poisoned");
            log.total += 1;
            log.recent.extend(estimate.warnings.iter().cloned());
            let excess = log.recent.len().saturating_sub(WARNING_LOG_CAPACITY);
            log.recent.drain(..excess);
        }
        inference::systematic_resample(&estimate.samples, query.k, query.seed)
    }
}

/// Samples the natural joint system and ignores the query plan.
#[derive(Debug, Clone, Default)]
pub struct UnconditionedOracle;

pub fn make_unconditioned_oracle() -> Arc<UnconditionedOracle> {
    Arc::new(UnconditionedOracle)
}

impl UnconditionedOracle {
    /// `k` robot futures from the joint system.
    pub fn sample_robot_marginal(
        &self,
        scenario: &Scenario,
        k: usize,
        seed: SeedKey,
    ) -> Result<Vec<RobotPlan>> {
        let base = seed.with_role(SeedRole::MarginalSample);
        (0..k as u64)
            .map(|i| idm::rollout_joint(scenario, base.derive(i)).map(|(_, r)| RobotPlan::from(r)))
            .collect()
    }

    /// `k` human futures from the joint system.
    pub fn sample_human_marginal(
        &self,
        scenario: &Scenario,
        k: usize,
        seed: SeedKey,
    ) -> Result<SampleSet> {
        let base = seed.with_role(SeedRole::MarginalSample);
        let samples = (0..k as u64)
            .map(|i| idm::rollout_joint(scenario, base.derive(i)).map(|(h, _)| h))
            .collect::<Result<Vec<_>>>()?;
        SampleSet::uniform(samples)
    }
}

impl Predictor for UnconditionedOracle {
    fn tag(&self) -> &str {
        "unconditioned"
    }

    fn causal_claim(&self) -> CausalClaim {
        CausalClaim::ClaimsInterventional
    }

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet> {
        query.validate()?;
        self.sample_human_marginal(&query.scenario, query.k, query.seed)
    }
}

impl MarginalSampler for UnconditionedOracle {
    fn sample_robot(&self, scenario: &Scenario, k: usize, seed: SeedKey) -> Result<Vec<RobotPlan>> {
        self.sample_robot_marginal(scenario, k, seed)
    }
}

/// A fixed set of robot speed profiles, e.g. produced by a motion planner.
///
/// Each profile lists speeds for steps `1 … T_H`; positions are integrated
/// from the scenario's initial robot state. Draws are with replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSet {
    pub speed_profiles: Vec<Vec<f64>>,
}

impl PlanSet {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.speed_profiles.is_empty() {
            return Err(Error::Config("plan set is empty".into()));
        }
        for (i, p) in self.speed_profiles.iter().enumerate() {
            if p.len() != horizon {
                return Err(Error::Config(format!(
                    "plan profile {i} has {} speeds, horizon is {horizon}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("plan profile {i} has an invalid speed")));
            }
        }
        Ok(())
    }
}

impl MarginalSampler for PlanSet {
    fn sample_robot(&self, scenario: &Scenario, k: usize, seed: SeedKey) -> Result<Vec<RobotPlan>> {
        use rand::Rng;
        self.validate(scenario.horizon)?;
        let mut rng = seed.with_role(SeedRole::MarginalSample).rng();
        (0..k)
            .map(|_| {
                let idx = rng.random_range(0..self.speed_profiles.len());
                RobotPlan::from_speeds(scenario.robot0, &self.speed_profiles[idx], scenario.params.dt)
            })
            .collect()
    }
}
