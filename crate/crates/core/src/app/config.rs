//! Run configuration shared by the command-line tool and the examples.
//!
//! A [`RunConfig`] is validated before any work starts and written as
//! `config.json` into every output directory; loading it back reproduces the
//! run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extproto::{make_external, EndpointDescriptor};
use crate::idm::{self, RobotPlan};
use crate::inference::CompareBins;
use crate::predictors::{
    make_cbp_oracle, make_ibp_oracle, make_unconditioned_oracle, CausalClaim, ConstantVelocity, MarginalSampler,
    PlanSet, PredictorHandle,
};
use crate::seed::SeedKey;
use crate::shapley::{AuditConfig, DatasetItem, DatasetRanges};
use crate::types::{IdmParams, Scenario};

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CommandConfig {
    Simulate(SimulateConfig),
    ToyCompare(ToyCompareConfig),
    GenDataset(GenDatasetConfig),
    Audit(AuditRunConfig),
    Bench(BenchConfig),
    Probe(ProbeConfig),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Simulate(_) => "simulate",
            CommandConfig::ToyCompare(_) => "toy-compare",
            CommandConfig::GenDataset(_) => "gen-dataset",
            CommandConfig::Audit(_) => "audit",
            CommandConfig::Bench(_) => "bench",
            CommandConfig::Probe(_) => "probe",
        }
    }
}

/// The robot future used by `simulate` and `toy-compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlanSpec {
    /// Accelerate at `accel` until `v_max`.
    Accelerate { accel: f64, v_max: f64 },
    /// Robot trajectory of one joint rollout with the run seed.
    Natural,
    /// Explicit speeds for steps `1 … T_H`.
    Speeds { speeds: Vec<f64> },
}

impl PlanSpec {
    pub fn paper() -> Self {
        PlanSpec::Accelerate {
            accel: 5.0,
            v_max: 10.0,
        }
    }

    pub fn build(&self, scenario: &Scenario, seed: SeedKey) -> Result<RobotPlan> {
        match self {
            PlanSpec::Accelerate { accel, v_max } => idm::plan_accelerate(scenario, *accel, *v_max),
            PlanSpec::Natural => Ok(RobotPlan::from(idm::rollout_joint(scenario, seed)?.1)),
            PlanSpec::Speeds { speeds } => {
                if speeds.len() != scenario.horizon {
                    return Err(Error::Config(format!(
                        "plan.speeds: expected {} speeds, got {}",
                        scenario.horizon,
                        speeds.len()
                    )));
                }
                RobotPlan::from_speeds(scenario.robot0, speeds, scenario.params.dt)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Joint,
    Intervened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub scenario: Scenario,
    pub mode: SimMode,
    pub plan: PlanSpec,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCompareConfig {
    pub scenario: Scenario,
    pub plan: PlanSpec,
    pub trials: usize,
    pub bins: CompareBins,
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDatasetConfig {
    pub n_scenarios: usize,
    pub ranges: DatasetRanges,
    pub params: IdmParams,
    pub horizon: usize,
}

/// Built-in predictor tag or an external endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PredictorSpec {
    Builtin { tag: String },
    External { endpoint: EndpointDescriptor, claim: CausalClaim },
}

pub const BUILTIN_TAGS: [&str; 4] = ["ibp-oracle", "cbp-oracle", "unconditioned-oracle", "constant-velocity"];

impl PredictorSpec {
    /// Accepts a built-in tag (or its short alias) or `cmd:…` / `tcp:…`.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec.starts_with("cmd:") || spec.starts_with("tcp:") {
            return Ok(PredictorSpec::External {
                endpoint: EndpointDescriptor::parse(spec)?,
                claim: CausalClaim::Unknown,
            });
        }
        let tag = match spec {
            "ibp" => "ibp-oracle",
            "cbp" => "cbp-oracle",
            "unconditioned" => "unconditioned-oracle",
            "cv" => "constant-velocity",
            other => other,
        };
        let spec = PredictorSpec::Builtin { tag: tag.to_string() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorSpec::Builtin { tag } if !BUILTIN_TAGS.contains(&tag.as_str()) => Err(Error::Config(format!(
                "predictor: unknown tag `{tag}` (expected one of {})",
                BUILTIN_TAGS.join(", ")
            ))),
            PredictorSpec::Builtin { .. } => Ok(()),
            PredictorSpec::External { endpoint, .. } => endpoint.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PredictorSpec::Builtin { tag } => tag.clone(),
            PredictorSpec::External { endpoint, .. } => format!("external:{}", endpoint.describe()),
        }
    }

    /// Instantiates the predictor; external endpoints are launched and
    /// handshaken here.
    pub fn resolve(&self) -> Result<PredictorHandle> {
        self.validate()?;
        Ok(match self {
            PredictorSpec::Builtin { tag } => match tag.as_str() {
                "ibp-oracle" => make_ibp_oracle(),
                "cbp-oracle" => make_cbp_oracle(),
                "unconditioned-oracle" => make_unconditioned_oracle(),
                _ => Arc::new(ConstantVelocity),
            },
            PredictorSpec::External { endpoint, claim } => Arc::new(make_external(endpoint)?.with_claim(*claim)),
        })
    }
}

/// Source of replacement robot segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarginalSpec {
    Unconditioned,
    /// JSON file holding a [`PlanSet`].
    PlanSet { path: PathBuf },
}

impl MarginalSpec {
    pub fn resolve(&self, horizon: usize) -> Result<Box<dyn MarginalSampler>> {
        match self {
            MarginalSpec::Unconditioned => Ok(Box::new(crate::predictors::UnconditionedOracle)),
            MarginalSpec::PlanSet { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("marginal.path: cannot read {}: {e}", path.display())))?;
                let set: PlanSet = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("marginal.path: {}: {e}", path.display())))?;
                set.validate(horizon)?;
                Ok(Box::new(set))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRunConfig {
    pub dataset: PathBuf,
    pub predictor: PredictorSpec,
    pub marginal: MarginalSpec,
    pub audit: AuditConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: PathBuf,
    pub predictors: Vec<PredictorSpec>,
    /// Samples per prediction for the accuracy metrics.
    pub k: usize,
    /// Samples entering minADE / minFDE (the first `min_k` of `k`).
    pub min_k: usize,
    pub marginal: MarginalSpec,
    /// Audit settings for the verdict column; `None` skips the audit.
    pub audit: Option<AuditConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub endpoint: EndpointDescriptor,
}

/// Dataset file written by `gen-dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub seed: u64,
    pub generator: GenDatasetConfig,
    pub items: Vec<DatasetItem>,
}

impl DatasetFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("dataset: cannot read {}: {e}", path.display())))?;
        let file: DatasetFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("dataset: {} is not a dataset file: {e}", path.display())))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "dataset: schema version {} unsupported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        other => Error::Config(format!("{name}: {other}")),
    })
}

fn positive(name: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{name}: must be >= 1")));
    }
    Ok(())
}

impl RunConfig {
    pub fn new(seed: u64, out_dir: impl Into<PathBuf>, command: CommandConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            out_dir: out_dir.into(),
            command,
        }
    }

    pub fn seed_key(&self) -> SeedKey {
        SeedKey::new(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.command {
            CommandConfig::Simulate(c) => {
                field("scenario", c.scenario.validate())?;
                positive("trials", c.trials)?;
                if c.mode == SimMode::Intervened {
                    field("plan", c.plan.build(&c.scenario, self.seed_key()).map(|_| ()))?;
                }
            }
            CommandConfig::ToyCompare(c) => {
                field("scenario", c.scenario.validate())?;
                positive("trials", c.trials)?;
                field("plan", c.plan.build(&c.scenario, self.seed_key()).map(|_| ()))?;
                field("bins.position_edges", crate::stats::histogram(&[], None, &c.bins.position_edges).map(|_| ()))?;
                field("bins.distance_edges", crate::stats::histogram(&[], None, &c.bins.distance_edges).map(|_| ()))?;
            }
            CommandConfig::GenDataset(c) => {
                field("ranges", c.ranges.validate())?;
                field("params", c.params.validate())?;
                positive("horizon", c.horizon)?;
            }
            CommandConfig::Audit(c) => {
                field("predictor", c.predictor.validate())?;
                field("audit", c.audit.validate())?;
            }
            CommandConfig::Bench(c) => {
                if c.predictors.is_empty() {
                    return Err(Error::Config("predictors: at least one is required".into()));
                }
                for p in &c.predictors {
                    field("predictors", p.validate())?;
                }
                positive("k", c.k)?;
                positive("min_k", c.min_k)?;
                if c.min_k > c.k {
                    return Err(Error::Config(format!("min_k: {} exceeds k = {}", c.min_k, c.k)));
                }
                if let Some(a) = &c.audit {
                    field("audit", a.validate())?;
                }
            }
            CommandConfig::Probe(c) => field("endpoint", c.endpoint.validate())?,
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Scenario, plan and trial count of the toy study.
pub fn paper_toy_compare() -> ToyCompareConfig {
    ToyCompareConfig {
        scenario: Scenario::paper_toy(),
        plan: PlanSpec::paper(),
        trials: 10_000,
        bins: CompareBins::default(),
        plots: true,
    }
}

pub fn paper_toy_simulate() -> SimulateConfig {
    SimulateConfig {
        scenario: Scenario::paper_toy(),
        mode: SimMode::Joint,
        plan: PlanSpec::paper(),
        trials: 1,
    }
}

pub fn default_gen_dataset() -> GenDatasetConfig {
    GenDatasetConfig {
        n_scenarios: 100,
        ranges: DatasetRanges::default(),
        params: IdmParams::paper(),
        horizon: 10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::new(7, "out", CommandConfig::ToyCompare(paper_toy_compare()));
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        back.validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let mut sim = paper_toy_simulate();
        sim.scenario.horizon = 0;
        let err = RunConfig::new(1, "o", CommandConfig::Simulate(sim)).validate().unwrap_err();
        assert!(err.to_string().contains("scenario"), "{err}");
        let mut sim = paper_toy_simulate();
        sim.trials = 0;
        let err = RunConfig::new(1, "o", CommandConfig::Simulate(sim)).validate().unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
    }

    #[test]
    fn predictor_specs() {
        assert_eq!(
            PredictorSpec::parse("cbp").unwrap(),
            PredictorSpec::Builtin {
                tag: "cbp-oracle".into()
            }
        );
        assert!(PredictorSpec::parse("oracle-of-delphi").is_err());
        assert!(matches!(
            PredictorSpec::parse("cmd:ibp serve-ref").unwrap(),
            PredictorSpec::External { .. }
        ));
    }

    #[test]
    fn speeds_plan_must_match_horizon() {
        let sc = Scenario::paper_toy();
        assert!(PlanSpec::Speeds { speeds: vec![5.0; 3] }.build(&sc, SeedKey::new(0)).is_err());
        let plan = PlanSpec::Speeds { speeds: vec![5.0; 10] }.build(&sc, SeedKey::new(0)).unwrap();
        plan.check_against(&sc).unwrap();
    }
}
