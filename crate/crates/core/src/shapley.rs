//! Shapley-value attribution of early-horizon prediction accuracy to segments
//! of the robot's future.
//!
//! The robot future `x_{r,1:T_H}` is split into `m` contiguous segments by a
//! [`SegmentScheme`]. For a subset `S` of segments, `ν(S)` is the predictor's
//! error over the first segment's horizon `t₁` when the segments outside `S`
//! are replaced by draws from a marginal robot sampler:
//!
//! ```text
//! ν(S) ≈ (1/K) Σ_k f(x̃ᵏ),   x̃ᵏ_j = x_j if j ∈ S else x̂ᵏ_j
//! ```
//!
//! Exact Shapley values are then computed over all `2^m` subsets. A predictor
//! that respects the temporal independence of an intervention cannot use
//! segments `j ≥ 2` to predict steps `≤ t₁`, so their Shapley values vanish;
//! a conditional predictor gains accuracy from them.
//!
//! Splicing is done on the speed channel and positions are re-integrated from
//! the initial robot state, so every hybrid query is a consistent plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idm::{self, RobotPlan};
use crate::metrics::{self, BandwidthRule, HorizonPrefix, MetricKind};
use crate::predictors::{CausalClaim, MarginalSampler, PredictionQuery, Predictor};
use crate::seed::{SeedKey, SeedRole};
use crate::stats;
use crate::types::{AgentState, IdmParams, SampleSet, Scenario, Trajectory};

/// Cut points `0 < t₁ < … < t_m = T_H`; segment `j` covers steps
/// `t_{j-1}+1 … t_j` (with `t_0 = 0`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentScheme {
    pub cuts: Vec<usize>,
}

pub const MAX_SEGMENTS: usize = 16;

impl SegmentScheme {
    pub fn new(cuts: Vec<usize>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(Error::Config(format!(
                "segment scheme needs at least 2 segments, got {}",
                cuts.len()
            )));
        }
        if cuts.len() > MAX_SEGMENTS {
            return Err(Error::Config(format!(
                "at most {MAX_SEGMENTS} segments supported for exact enumeration"
            )));
        }
        if cuts[0] == 0 || cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "segment cuts must be strictly increasing and positive: {cuts:?}"
            )));
        }
        Ok(Self { cuts })
    }

    /// Cuts (4, 7, 10) for a ten-step horizon.
    pub fn paper_default() -> Self {
        Self { cuts: vec![4, 7, 10] }
    }

    pub fn segments(&self) -> usize {
        self.cuts.len()
    }

    pub fn horizon(&self) -> usize {
        self.cuts[self.cuts.len() - 1]
    }

    /// The evaluation prefix `t₁`.
    pub fn prefix(&self) -> HorizonPrefix {
        HorizonPrefix(self.cuts[0])
    }

    /// Zero-based segment index of step `t ≥ 1`.
    pub fn segment_of(&self, t: usize) -> usize {
        self.cuts.partition_point(|c| *c < t)
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if self.horizon() != horizon {
            return Err(Error::Config(format!(
                "segment cuts end at {} but the horizon is {horizon}",
                self.horizon()
            )));
        }
        Ok(())
    }
}

/// Hybrid plan: speeds of segments in `subset` (bit `j` = segment `j`) from
/// `truth`, the rest from `replacement`; positions re-integrated.
pub fn splice(
    truth: &RobotPlan,
    replacement: &RobotPlan,
    subset: u32,
    scheme: &SegmentScheme,
    dt: f64,
) -> Result<RobotPlan> {
    if truth.horizon() != scheme.horizon() || replacement.horizon() != scheme.horizon() {
        return Err(Error::Shape("plans and segment scheme disagree on the horizon".into()));
    }
    let speeds: Vec<f64> = (1..=scheme.horizon())
        .map(|t| {
            if subset & (1 << scheme.segment_of(t)) != 0 {
                truth.states[t].v
            } else {
                replacement.states[t].v
            }
        })
        .collect();
    RobotPlan::from_speeds(truth.states[0], &speeds, dt)
}

fn shapley_weight(m: usize, s: usize) -> f64 {
    // s! (m - s - 1)! / m!
    let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
    fact(s) * fact(m - s - 1) / fact(m)
}

/// Exact Shapley values of a set function given as `values[mask]` over all
/// `2^m` subsets (bit `j` of `mask` = player `j`).
pub fn shapley_exact(values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > MAX_SEGMENTS {
        return Err(Error::Config(format!("player count must be in 1..={MAX_SEGMENTS}")));
    }
    let expected = 1usize << m;
    if values.len() != expected {
        return Err(Error::IncompleteLattice {
            expected,
            got: values.len(),
        });
    }
    let weights: Vec<f64> = (0..m).map(|s| shapley_weight(m, s)).collect();
    Ok((0..m)
        .map(|i| {
            let bit = 1usize << i;
            (0..expected)
                .filter(|mask| mask & bit == 0)
                .map(|mask| {
                    let size = (mask as u32).count_ones() as usize;
                    weights[size] * (values[mask | bit] - values[mask])
                })
                .sum()
        })
        .collect())
}

/// Sign applied to raw Shapley values of a metric so that positive credit
/// means the segment reduced the error.
pub fn credit_sign(metric: MetricKind) -> f64 {
    match metric {
        MetricKind::Ade
        | MetricKind::Fde
        | MetricKind::KdeNll
        | MetricKind::MinAde
        | MetricKind::MinFde => -1.0,
    }
}

/// Credited Shapley values from an evaluated lattice.
pub fn shapley_from_evals(evals: &[SetFunctionEval], m: usize, metric: MetricKind) -> Result<Vec<f64>> {
    let expected = 1usize << m;
    let mut values = vec![None; expected];
    for e in evals {
        if (e.subset as usize) < expected {
            values[e.subset as usize] = e.value(metric);
        }
    }
    let present = values.iter().filter(|v| v.is_some()).count();
    if present != expected {
        return Err(Error::IncompleteLattice {
            expected,
            got: present,
        });
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.expect("checked")).collect();
    let sign = credit_sign(metric);
    Ok(shapley_exact(&values, m)?.into_iter().map(|p| sign * p).collect())
}

/// Predictor samples requested per hybrid query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplesPerQuery {
    /// For ADE and FDE.
    pub displacement: usize,
    /// For KDE-NLL, which needs several samples to fit a density.
    pub kde: usize,
}

impl Default for SamplesPerQuery {
    fn default() -> Self {
        Self {
            displacement: 1,
            kde: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub scheme: SegmentScheme,
    pub metrics: Vec<MetricKind>,
    /// Number of hybrid queries `K` per subset.
    pub k: usize,
    pub samples_per_query: SamplesPerQuery,
    pub epsilon: f64,
    /// Metrics whose late-segment credit must stay below `epsilon`.
    pub gated: Vec<MetricKind>,
    pub common_random_numbers: bool,
    pub bandwidth: BandwidthRule,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            scheme: SegmentScheme::paper_default(),
            metrics: vec![MetricKind::Ade, MetricKind::Fde, MetricKind::KdeNll],
            k: 64,
            samples_per_query: SamplesPerQuery::default(),
            epsilon: 0.01,
            gated: vec![MetricKind::Fde],
            common_random_numbers: true,
            bandwidth: BandwidthRule::default(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        SegmentScheme::new(self.scheme.cuts.clone())?;
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if let Some(m) = self.metrics.iter().find(|m| !m.is_mean_form()) {
            return Err(Error::Config(format!(
                "{} is not allowed in a Shapley audit; use ADE, FDE or KDE-NLL",
                m.name()
            )));
        }
        if let Some(m) = self.gated.iter().find(|g| !self.metrics.contains(g)) {
            return Err(Error::Config(format!("gated metric {} is not computed", m.name())));
        }
        if self.k == 0 || self.samples_per_query.displacement == 0 || self.samples_per_query.kde == 0 {
            return Err(Error::Config("sample counts must be >= 1".into()));
        }
        if self.epsilon.is_nan() {
            return Err(Error::Config("epsilon must be a number".into()));
        }
        Ok(())
    }

    fn groups(&self) -> Vec<(usize, Vec<MetricKind>)> {
        let mut displacement = Vec::new();
        let mut kde = Vec::new();
        for m in &self.metrics {
            if *m == MetricKind::KdeNll {
                kde.push(*m);
            } else {
                displacement.push(*m);
            }
        }
        let mut groups = Vec::new();
        if !displacement.is_empty() {
            groups.push((self.samples_per_query.displacement, displacement));
        }
        if !kde.is_empty() {
            groups.push((self.samples_per_query.kde, kde));
        }
        groups
    }
}

/// One scenario with its ground-truth futures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub id: u64,
    pub scenario: Scenario,
    pub truth_human: Trajectory,
    pub truth_robot: RobotPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRanges {
    pub s0: (f64, f64),
    pub v0: (f64, f64),
}

impl Default for DatasetRanges {
    fn default() -> Self {
        Self {
            s0: (10.0, 30.0),
            v0: (3.0, 10.0),
        }
    }
}

impl DatasetRanges {
    pub fn validate(&self) -> Result<()> {
        let (s_lo, s_hi) = self.s0;
        let (v_lo, v_hi) = self.v0;
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo <= s_hi) {
            return Err(Error::Config(format!("invalid s0 range {:?}", self.s0)));
        }
        if !(v_lo.is_finite() && v_hi.is_finite() && 0.0 <= v_lo && v_lo <= v_hi) {
            return Err(Error::Config(format!("invalid v0 range {:?}", self.v0)));
        }
        Ok(())
    }
}

const INITIAL_STATE_TAG: u64 = 0x1;
const TRUTH_TAG: u64 = 0x2;

/// Random scenarios with ground truths from the joint (reactive) system.
pub fn dataset_generate(
    n_scenarios: usize,
    ranges: DatasetRanges,
    params: IdmParams,
    horizon: usize,
    seed: SeedKey,
) -> Result<Vec<DatasetItem>> {
    use rand::Rng;
    ranges.validate()?;
    params.validate()?;
    (0..n_scenarios as u64)
        .map(|id| {
            let key = seed.with_scenario(id);
            let mut rng = key.derive(INITIAL_STATE_TAG).rng();
            let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
            let human0 = AgentState::new(draw(ranges.s0), draw(ranges.v0));
            let robot0 = AgentState::new(draw(ranges.s0), draw(ranges.v0));
            let scenario = Scenario::new(human0, robot0, params, horizon);
            let (truth_human, truth_robot) = idm::rollout_joint(&scenario, key.derive(TRUTH_TAG))?;
            Ok(DatasetItem {
                id,
                scenario,
                truth_human,
                truth_robot: RobotPlan::from(truth_robot),
            })
        })
        .collect()
}

/// `ν(S)` for every requested metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFunctionEval {
    pub subset: u32,
    pub values: Vec<(MetricKind, f64)>,
    pub k: usize,
    pub seed: SeedKey,
}

impl SetFunctionEval {
    pub fn value(&self, metric: MetricKind) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

fn evaluate_metric(
    metric: MetricKind,
    samples: &SampleSet,
    truth: &Trajectory,
    prefix: HorizonPrefix,
    bandwidth: BandwidthRule,
) -> Result<f64> {
    match metric {
        MetricKind::KdeNll => metrics::kde_nll(samples, truth, prefix, bandwidth),
        other => metrics::evaluate(other, samples, truth, prefix),
    }
}

fn check_returned(predictor: &dyn Predictor, out: &SampleSet, query: &PredictionQuery) -> Result<()> {
    let sc = &query.scenario;
    if out.len() != query.k || out.horizon() != sc.horizon {
        return Err(Error::predictor(
            predictor.tag(),
            format!(
                "returned {} samples of horizon {}, expected {} of horizon {}",
                out.len(),
                out.horizon(),
                query.k,
                sc.horizon
            ),
        ));
    }
    if let Some(i) = out.samples.iter().position(|t| t.states[0] != sc.human0) {
        return Err(Error::predictor(
            predictor.tag(),
            format!("sample {i} does not start at the queried human state"),
        ));
    }
    Ok(())
}

/// `ν(S)` from pre-drawn marginal plans and a base predictor seed.
pub fn eval_nu_with_plans(
    predictor: &dyn Predictor,
    item: &DatasetItem,
    subset: u32,
    config: &AuditConfig,
    marginal_plans: &[RobotPlan],
    predictor_seed: SeedKey,
) -> Result<SetFunctionEval> {
    let scheme = &config.scheme;
    scheme.check_horizon(item.scenario.horizon)?;
    if subset >> scheme.segments() != 0 {
        return Err(Error::Config(format!("subset {subset:#b} has players outside the scheme")));
    }
    if marginal_plans.is_empty() {
        return Err(Error::Config("no marginal plans".into()));
    }
    let prefix = scheme.prefix();
    let dt = item.scenario.params.dt;
    let mut sums: Vec<(MetricKind, f64)> = config.metrics.iter().map(|m| (*m, 0.0)).collect();
    for (k, replacement) in marginal_plans.iter().enumerate() {
        let hybrid = splice(&item.truth_robot, replacement, subset, scheme, dt)?;
        for (group, (n, group_metrics)) in config.groups().into_iter().enumerate() {
            let query = PredictionQuery {
                scenario: item.scenario,
                robot_future: hybrid.clone(),
                k: n,
                seed: predictor_seed.derive(k as u64).derive(group as u64),
            };
            let out = predictor
                .predict(&query)
                .map_err(|e| with_subset_context(predictor, subset, e))?;
            check_returned(predictor, &out, &query)?;
            for m in group_metrics {
                let value = evaluate_metric(m, &out, &item.truth_human, prefix, config.bandwidth)?;
                let slot = sums.iter_mut().find(|(kind, _)| *kind == m).expect("metric slot");
                slot.1 += value;
            }
        }
    }
    let count = marginal_plans.len() as f64;
    Ok(SetFunctionEval {
        subset,
        values: sums.into_iter().map(|(m, s)| (m, s / count)).collect(),
        k: marginal_plans.len(),
        seed: predictor_seed,
    })
}

fn with_subset_context(predictor: &dyn Predictor, subset: u32, e: Error) -> Error {
    match e {
        Error::Predictor { tag, message } => Error::Predictor {
            tag,
            message: format!("subset {subset:#b}: {message}"),
        },
        other => Error::predictor(predictor.tag(), format!("subset {subset:#b}: {other}")),
    }
}

/// `ν(S)` for a single subset, drawing its own marginal plans.
pub fn eval_nu(
    predictor: &dyn Predictor,
    item: &DatasetItem,
    subset: u32,
    config: &AuditConfig,
    sampler: &dyn MarginalSampler,
    seed: SeedKey,
) -> Result<SetFunctionEval> {
    let key = seed.with_scenario(item.id);
    let plans = sampler.sample_robot(&item.scenario, config.k, key.with_role(SeedRole::MarginalSample))?;
    eval_nu_with_plans(predictor, item, subset, config, &plans, key.with_role(SeedRole::HumanNoise))
}

/// All `2^m` subset evaluations for one scenario. With common random numbers
/// every subset reuses the same marginal plans and predictor seeds; without,
/// each subset draws its own.
pub fn eval_lattice(
    predictor: &dyn Predictor,
    item: &DatasetItem,
    config: &AuditConfig,
    sampler: &dyn MarginalSampler,
    seed: SeedKey,
) -> Result<Vec<SetFunctionEval>> {
    let m = config.scheme.segments();
    let key = seed.with_scenario(item.id);
    let shared = if config.common_random_numbers {
        Some(sampler.sample_robot(&item.scenario, config.k, key.with_role(SeedRole::MarginalSample))?)
    } else {
        None
    };
    (0..1u32 << m)
        .map(|subset| match &shared {
            Some(plans) => {
                eval_nu_with_plans(predictor, item, subset, config, plans, key.with_role(SeedRole::HumanNoise))
            }
            None => {
                let sub = key.derive(u64::from(subset) + 1);
                let plans =
                    sampler.sample_robot(&item.scenario, config.k, sub.with_role(SeedRole::MarginalSample))?;
                eval_nu_with_plans(predictor, item, subset, config, &plans, sub.with_role(SeedRole::HumanNoise))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: MetricKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Three standard errors of the mean, per segment.
    pub noise_floor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub metric: MetricKind,
    /// One-based segment index.
    pub segment: usize,
    pub mean: f64,
    pub epsilon: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAttribution {
    pub id: u64,
    pub phi: Vec<(MetricKind, Vec<f64>)>,
    pub nu: Vec<(MetricKind, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub id: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub predictor: String,
    pub causal_claim: CausalClaim,
    pub config: AuditConfig,
    pub summaries: Vec<MetricSummary>,
    pub checks: Vec<ConstraintCheck>,
    pub verdict: Verdict,
    pub scenarios: Vec<ScenarioAttribution>,
    pub failures: Vec<ScenarioFailure>,
}

impl ShapleyReport {
    pub fn summary(&self, metric: MetricKind) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.metric == metric)
    }

    /// `mean ± std` per metric and segment, one block per metric.
    pub fn to_table(&self) -> String {
        let m = self.config.scheme.segments();
        let mut out = String::new();
        out.push_str(&format!("Shapley values for `{}` ({} scenarios", self.predictor, self.scenarios.len()));
        if !self.failures.is_empty() {
            out.push_str(&format!(", {} failed", self.failures.len()));
        }
        out.push_str(")\n");
        for s in &self.summaries {
            let name = s.metric.name();
            let header: Vec<String> = (1..=m).map(|j| format!("phi^{name}_{j}")).collect();
            out.push_str(&format!("{}\n", header.iter().map(|h| format!("{h:>22}")).collect::<String>()));
            let row: String = (0..m)
                .map(|j| format!("{:>22}", format!("{:.4} ± {:.4}", s.mean[j], s.std[j])))
                .collect();
            out.push_str(&row);
            out.push('\n');
        }
        for c in &self.checks {
            out.push_str(&format!(
                "constraint phi^{}_{} <= {}: mean {:.6} -> {}\n",
                c.metric.name(),
                c.segment,
                c.epsilon,
                c.mean,
                if c.pass { "ok" } else { "VIOLATED" }
            ));
        }
        out.push_str(&format!(
            "verdict: {}\n",
            match self.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
            }
        ));
        out
    }
}

/// Per-scenario credited Shapley values for every configured metric.
pub fn scenario_attribution(
    predictor: &dyn Predictor,
    item: &DatasetItem,
    config: &AuditConfig,
    sampler: &dyn MarginalSampler,
    seed: SeedKey,
) -> Result<ScenarioAttribution> {
    let evals = eval_lattice(predictor, item, config, sampler, seed)?;
    let m = config.scheme.segments();
    let mut phi = Vec::new();
    let mut nu = Vec::new();
    for metric in &config.metrics {
        phi.push((*metric, shapley_from_evals(&evals, m, *metric)?));
        nu.push((
            *metric,
            evals.iter().map(|e| e.value(*metric).expect("metric evaluated")).collect(),
        ));
    }
    Ok(ScenarioAttribution { id: item.id, phi, nu })
}

/// Shapley audit over a dataset: mean ± std of the credited values per metric
/// and segment, and the verdict `mean φ_j ≤ ε` for all `j ≥ 2` and all gated
/// metrics. Scenarios whose predictor calls fail are skipped and listed.
pub fn audit(
    predictor: &dyn Predictor,
    dataset: &[DatasetItem],
    config: &AuditConfig,
    sampler: &dyn MarginalSampler,
    seed: SeedKey,
) -> Result<ShapleyReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("audit needs a nonempty dataset".into()));
    }
    for item in dataset {
        config.scheme.check_horizon(item.scenario.horizon)?;
    }
    let results: Vec<Result<ScenarioAttribution>> = dataset
        .par_iter()
        .map(|item| scenario_attribution(predictor, item, config, sampler, seed))
        .collect();
    let mut scenarios = Vec::new();
    let mut failures = Vec::new();
    for (item, r) in dataset.iter().zip(results) {
        match r {
            Ok(a) => scenarios.push(a),
            Err(e) => failures.push(ScenarioFailure {
                id: item.id,
                message: e.to_string(),
            }),
        }
    }
    if scenarios.is_empty() {
        return Err(Error::predictor(
            predictor.tag(),
            format!(
                "every scenario failed; first error: {}",
                failures.first().map_or("", |f| f.message.as_str())
            ),
        ));
    }
    let m = config.scheme.segments();
    let n = scenarios.len() as f64;
    let summaries: Vec<MetricSummary> = config
        .metrics
        .iter()
        .enumerate()
        .map(|(mi, metric)| {
            let mut mean = Vec::with_capacity(m);
            let mut std = Vec::with_capacity(m);
            let mut noise_floor = Vec::with_capacity(m);
            for j in 0..m {
                let column: Vec<f64> = scenarios.iter().map(|s| s.phi[mi].1[j]).collect();
                let (mu, sd) = stats::mean_std(&column);
                mean.push(mu);
                std.push(sd);
                noise_floor.push(3.0 * sd / n.sqrt());
            }
            MetricSummary {
                metric: *metric,
                mean,
                std,
                noise_floor,
            }
        })
        .collect();
    let mut checks = Vec::new();
    for metric in &config.gated {
        let summary = summaries.iter().find(|s| s.metric == *metric).expect("gated metric summarized");
        for j in 1..m {
            checks.push(ConstraintCheck {
                metric: *metric,
                segment: j + 1,
                mean: summary.mean[j],
                epsilon: config.epsilon,
                pass: summary.mean[j] <= config.epsilon,
            });
        }
    }
    let verdict = if checks.iter().all(|c| c.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(ShapleyReport {
        predictor: predictor.tag().to_string(),
        causal_claim: predictor.causal_claim(),
        config: config.clone(),
        summaries,
        checks,
        verdict,
        scenarios,
        failures,
    })
}
