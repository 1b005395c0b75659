//! Conditional and interventional distributions of the human's future.
//!
//! The conditional distribution treats the robot plan as *evidence*: human
//! futures are sampled forward and each is weighted by how likely the
//! reactive robot would have produced the observed plan speeds given that
//! human (likelihood weighting). The interventional distribution *enforces*
//! the plan: the robot stops reacting and the human is simply rolled out
//! against it.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idm::{self, RobotPlan};
use crate::seed::{SeedKey, SeedRole};
use crate::stats::{self, Histogram};
use crate::types::{SampleSet, Scenario, Trajectory};

pub const DEFAULT_ESS_FLOOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimateWarning {
    /// The evidence is so unlikely that few samples carry the weight.
    LowEss { ess: f64, floor: f64 },
}

impl fmt::Display for EstimateWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateWarning::LowEss { ess, floor } => write!(
                f,
                "degenerate evidence: effective sample size {ess:.2} below floor {floor}"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LwOptions {
    pub ess_floor: f64,
    /// Skip the evidence likelihood and keep all weights at one.
    pub ignore_evidence: bool,
}

impl Default for LwOptions {
    fn default() -> Self {
        Self {
            ess_floor: DEFAULT_ESS_FLOOR,
            ignore_evidence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub samples: SampleSet,
    pub ess: f64,
    pub evidence_plan: RobotPlan,
    pub warnings: Vec<EstimateWarning>,
}

fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Likelihood-weighting estimate of the human's future given the robot plan
/// as an observation.
pub fn conditional_lw(
    scenario: &Scenario,
    evidence: &RobotPlan,
    n_samples: usize,
    seed: SeedKey,
) -> Result<ConditionalEstimate> {
    conditional_lw_with(scenario, evidence, n_samples, seed, LwOptions::default())
}

pub fn conditional_lw_with(
    scenario: &Scenario,
    evidence: &RobotPlan,
    n_samples: usize,
    seed: SeedKey,
    options: LwOptions,
) -> Result<ConditionalEstimate> {
    scenario.validate()?;
    evidence.check_against(scenario)?;
    if n_samples == 0 {
        return Err(Error::Shape("n_samples must be >= 1".into()));
    }
    let params = scenario.params;
    let robot = &evidence.states;
    let noise = params.dt * params.noise_std;

    let draws: Vec<(Trajectory, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<(Trajectory, f64)> {
            let mut rng = seed.derive(i as u64).with_role(SeedRole::HumanNoise).rng();
            let mut human = Vec::with_capacity(scenario.horizon + 1);
            human.push(scenario.human0);
            let mut log_w = 0.0;
            for t in 0..scenario.horizon {
                let h = human[t];
                if !options.ignore_evidence {
                    let mean = idm::robot_mean_velocity(&h, &robot[t], &params)?;
                    let observed = robot[t + 1].v;
                    log_w += if noise > 0.0 {
                        normal_log_density(observed, mean, noise)
                    } else if observed == mean.max(0.0) {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let z = idm::normal(&mut rng);
                human.push(idm::human_step(&h, &robot[t], &params, z)?);
            }
            Ok((Trajectory { states: human }, log_w))
        })
        .collect::<Result<_>>()?;

    let max_log = draws.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::ZeroWeight);
    }
    let (samples, weights): (Vec<_>, Vec<_>) = draws
        .into_iter()
        .map(|(t, lw)| (t, (lw - max_log).exp()))
        .unzip();
    let ess = stats::effective_sample_size(&weights)?;
    let mut warnings = Vec::new();
    if ess < options.ess_floor {
        warnings.push(EstimateWarning::LowEss {
            ess,
            floor: options.ess_floor,
        });
    }
    Ok(ConditionalEstimate {
        samples: SampleSet::weighted(samples, weights)?,
        ess,
        evidence_plan: evidence.clone(),
        warnings,
    })
}

/// Systematic resampling of a weighted set down (or up) to `k` equally
/// weighted samples. One uniform offset is drawn from the `Resample` stream.
pub fn systematic_resample(set: &SampleSet, k: usize, seed: SeedKey) -> Result<SampleSet> {
    if k == 0 {
        return Err(Error::Shape("resample size must be >= 1".into()));
    }
    let weights = set.weight_vec();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let offset: f64 = seed.with_role(SeedRole::Resample).rng().random::<f64>();
    let mut picked = Vec::with_capacity(k);
    let mut cumulative = weights[0] / total;
    let mut idx = 0;
    for j in 0..k {
        let u = (offset + j as f64) / k as f64;
        while u >= cumulative && idx + 1 < weights.len() {
            idx += 1;
            cumulative += weights[idx] / total;
        }
        picked.push(set.samples[idx].clone());
    }
    SampleSet::uniform(picked)
}

/// Monte Carlo estimate of the human's future when the plan is enforced.
pub fn interventional_mc(
    scenario: &Scenario,
    plan: &RobotPlan,
    n_samples: usize,
    seed: SeedKey,
) -> Result<SampleSet> {
    scenario.validate()?;
    plan.check_against(scenario)?;
    if n_samples == 0 {
        return Err(Error::Shape("n_samples must be >= 1".into()));
    }
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| idm::rollout_intervened(scenario, plan, seed.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::uniform(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareBins {
    pub position_edges: Vec<f64>,
    pub distance_edges: Vec<f64>,
}

impl Default for CompareBins {
    fn default() -> Self {
        Self {
            position_edges: stats::uniform_edges(-10.0, 20.0, 60),
            distance_edges: stats::uniform_edges(0.0, 20.0, 40),
        }
    }
}

/// Statistics of one distribution over human futures against one robot plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    /// Histograms of the human position for `t = 1 … T_H`.
    pub position_histograms: Vec<Histogram>,
    pub min_distance_histogram: Histogram,
    pub collision_probability: f64,
    /// Probability that the human reaches the point no later than the robot.
    pub non_yield_probability: f64,
    /// Weighted mean position for `t = 0 … T_H`.
    pub mean_position: Vec<f64>,
    /// Weighted mean speed for `t = 0 … T_H`.
    pub mean_speed: Vec<f64>,
    /// First step whose mean speed is at least `onset_drop` below the initial speed.
    pub deceleration_onset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub conditional: DistributionSummary,
    pub interventional: DistributionSummary,
    pub ess: f64,
    pub warnings: Vec<EstimateWarning>,
}

pub const DEFAULT_ONSET_DROP: f64 = 0.5;

/// First step at which `mean_speed` has dropped by at least `drop`.
pub fn deceleration_onset(mean_speed: &[f64], drop: f64) -> Option<usize> {
    let initial = *mean_speed.first()?;
    mean_speed.iter().position(|v| *v <= initial - drop)
}

pub fn summarize(
    scenario: &Scenario,
    plan: &RobotPlan,
    set: &SampleSet,
    bins: &CompareBins,
) -> Result<DistributionSummary> {
    let weights = set.weight_vec();
    let horizon = set.horizon();
    let mut position_histograms = Vec::with_capacity(horizon);
    let mut mean_position = Vec::with_capacity(horizon + 1);
    let mut mean_speed = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let positions = set.positions_at(t);
        mean_position.push(stats::weighted_mean(&positions, &weights)?);
        mean_speed.push(stats::weighted_mean(&set.speeds_at(t), &weights)?);
        if t > 0 {
            position_histograms.push(stats::histogram(&positions, Some(&weights), &bins.position_edges)?);
        }
    }
    let distances = set
        .samples
        .iter()
        .map(|h| idm::min_distance(&h.states, &plan.states, scenario.geometry))
        .collect::<Result<Vec<_>>>()?;
    let collisions: Vec<f64> = distances
        .iter()
        .map(|d| f64::from(u8::from(*d < scenario.collision_threshold)))
        .collect();
    let passed: Vec<f64> = set
        .samples
        .iter()
        .map(|h| f64::from(u8::from(idm::human_passed_first(&h.states, &plan.states))))
        .collect();
    Ok(DistributionSummary {
        position_histograms,
        min_distance_histogram: stats::histogram(&distances, Some(&weights), &bins.distance_edges)?,
        collision_probability: stats::weighted_mean(&collisions, &weights)?,
        non_yield_probability: stats::weighted_mean(&passed, &weights)?,
        deceleration_onset: deceleration_onset(&mean_speed, DEFAULT_ONSET_DROP),
        mean_position,
        mean_speed,
    })
}

/// Both distributions for the same scenario and plan. Sample `i` of each uses
/// the same human noise stream.
pub fn compare(
    scenario: &Scenario,
    plan: &RobotPlan,
    n_samples: usize,
    bins: &CompareBins,
    seed: SeedKey,
) -> Result<DistributionComparison> {
    let conditional = conditional_lw(scenario, plan, n_samples, seed)?;
    let interventional = interventional_mc(scenario, plan, n_samples, seed)?;
    Ok(DistributionComparison {
        conditional: summarize(scenario, plan, &conditional.samples, bins)?,
        interventional: summarize(scenario, plan, &interventional, bins)?,
        ess: conditional.ess,
        warnings: conditional.warnings,
    })
}
