use serde::{Deserialize, Serialize};

use super::client::{Capabilities, Connection, EndpointDescriptor};
use super::ProtocolError;
use crate::idm::{self, RobotPlan};
use crate::predictors::PredictionQuery;
use crate::seed::SeedKey;
use crate::types::{SampleSet, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Informational checks are reported but do not affect conformance.
    pub informational: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub endpoint: String,
    pub capabilities: Option<Capabilities>,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn conformant(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `Some(true)` if early outputs were unaffected by late plan changes.
    pub fn prefix_independent(&self) -> Option<bool> {
        self.check(PREFIX).map(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("endpoint: {}\n", self.endpoint);
        if let Some(c) = self.capabilities {
            out.push_str(&format!("capabilities: max_k={} capacity={}\n", c.max_k, c.capacity));
        }
        for c in &self.checks {
            let status = match (c.passed, c.informational) {
                (true, _) => "ok",
                (false, true) => "differs",
                (false, false) => "FAIL",
            };
            let info = if c.informational { " (informational)" } else { "" };
            out.push_str(&format!("{:<22} {status:<8}{info} {}\n", c.name, c.detail));
        }
        out.push_str(if self.conformant() { "conformant\n" } else { "NOT conformant\n" });
        out
    }
}

const HANDSHAKE: &str = "handshake";
const SHAPE: &str = "shape";
const DETERMINISM: &str = "determinism";
const SEED: &str = "seed-honoring";
const PREFIX: &str = "prefix-independence";

/// Steps over which the prefix spot check compares outputs.
const PREFIX_STEPS: usize = 4;
const PROBE_K: usize = 4;

fn probe_queries() -> (PredictionQuery, PredictionQuery) {
    let scenario = Scenario::paper_toy();
    let plan = idm::plan_accelerate(&scenario, 5.0, 10.0).expect("toy plan");
    let mut speeds: Vec<f64> = plan.speeds()[1..].to_vec();
    for (i, v) in speeds.iter_mut().enumerate().skip(PREFIX_STEPS) {
        *v = (4.0 - 2.0 * (i - PREFIX_STEPS) as f64).max(0.0);
    }
    let late = RobotPlan::from_speeds(scenario.robot0, &speeds, scenario.params.dt).expect("variant plan");
    let base = PredictionQuery {
        scenario,
        robot_future: plan,
        k: PROBE_K,
        seed: SeedKey::new(0x5EED),
    };
    let variant = PredictionQuery {
        robot_future: late,
        ..base.clone()
    };
    (base, variant)
}

fn pass(name: &str, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: true,
        informational: false,
        detail: detail.into(),
    }
}

fn fail(name: &str, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: false,
        informational: false,
        detail: detail.into(),
    }
}

fn prefix_equal(a: &SampleSet, b: &SampleSet, steps: usize) -> bool {
    a.samples
        .iter()
        .zip(&b.samples)
        .all(|(x, y)| x.states[..=steps] == y.states[..=steps])
}

/// Runs the conformance checks against a fresh connection. Failures are
/// collected in the report, never raised.
pub fn probe(endpoint: &EndpointDescriptor) -> ConformanceReport {
    let mut report = ConformanceReport {
        endpoint: endpoint.describe(),
        capabilities: None,
        checks: Vec::new(),
    };
    let mut conn = match Connection::open(endpoint) {
        Ok(c) => c,
        Err(e) => {
            let detail = match &e {
                ProtocolError::Timeout { .. } => format!("timeout: {e}"),
                _ => e.to_string(),
            };
            report.checks.push(fail(HANDSHAKE, detail));
            return report;
        }
    };
    let caps = conn.capabilities();
    report.capabilities = Some(caps);
    report.checks.push(pass(HANDSHAKE, format!("protocol {}", super::PROTOCOL_VERSION)));

    let (base, variant) = probe_queries();
    let single = PredictionQuery {
        k: 1,
        ..base.clone()
    };
    let first = match conn.predict(&base).and_then(|a| conn.predict(&single).map(|_| a)) {
        Ok(a) => {
            report.checks.push(pass(SHAPE, format!("k={PROBE_K} and k=1 answered with valid trajectories")));
            a
        }
        Err(e) => {
            report.checks.push(fail(SHAPE, e.to_string()));
            for name in [DETERMINISM, SEED, PREFIX] {
                report.checks.push(fail(name, "skipped: shape check failed"));
            }
            return report;
        }
    };

    report.checks.push(match conn.predict(&base) {
        Ok(again) if again == first => pass(DETERMINISM, "repeated query is bit-identical"),
        Ok(_) => fail(DETERMINISM, ProtocolError::DeterminismViolation("repeated query differs".into()).to_string()),
        Err(e) => fail(DETERMINISM, e.to_string()),
    });

    let other_seed = PredictionQuery {
        seed: base.seed.derive(1),
        ..base.clone()
    };
    report.checks.push(match conn.predict(&other_seed).and_then(|o| conn.predict(&base).map(|b| (o, b))) {
        Ok((_, after)) if after != first => fail(
            SEED,
            "a query with another seed in between changed the result; the endpoint carries state across calls",
        ),
        Ok((other, _)) if other == first => pass(SEED, "results reproducible; seed does not change outputs"),
        Ok(_) => pass(SEED, "results reproducible; distinct seeds give distinct outputs"),
        Err(e) => fail(SEED, e.to_string()),
    });

    report.checks.push(match conn.predict(&variant) {
        Ok(late) => {
            let clean = prefix_equal(&first, &late, PREFIX_STEPS);
            CheckResult {
                name: PREFIX.into(),
                passed: clean,
                informational: true,
                detail: if clean {
                    format!("steps 1..{PREFIX_STEPS} unchanged when only later plan steps differ")
                } else {
                    format!("steps 1..{PREFIX_STEPS} changed when only later plan steps differ")
                },
            }
        }
        Err(e) => CheckResult {
            name: PREFIX.into(),
            passed: false,
            informational: true,
            detail: e.to_string(),
        },
    });
    conn.shutdown();
    report
}
