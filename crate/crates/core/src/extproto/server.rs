use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::client::Capabilities;
use super::message::{parse_line, to_line, Message};
use super::{major_version, PROTOCOL_VERSION};
use crate::error::Result;
use crate::idm;
use crate::predictors::PredictionQuery;
use crate::seed::SeedRole;
use crate::types::{AgentState, Trajectory};

/// Endpoint logic behind [`serve`].
pub trait Handler {
    fn capabilities(&self) -> Capabilities;

    fn version(&self) -> &str {
        PROTOCOL_VERSION
    }

    /// Whether a client speaking `version` is served.
    fn accepts(&self, version: &str) -> bool {
        major_version(version).is_some() && major_version(version) == major_version(self.version())
    }

    fn predict(&mut self, query: &PredictionQuery) -> Result<Vec<Trajectory>>;
}

/// Answers requests from `reader` on `writer` until a shutdown message or
/// end of input. Bad requests get an `error` reply and the loop continues.
pub fn serve<R: BufRead, W: Write>(mut reader: R, mut writer: W, handler: &mut dyn Handler) -> io::Result<()> {
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            return Ok(());
        }
        let line_offset = offset;
        offset += n as u64;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match parse_line(&line, line_offset) {
            Err(e) => Message::Error {
                id: 0,
                message: e.to_string(),
            },
            Ok(Message::Shutdown { .. }) => return Ok(()),
            Ok(Message::Hello { id, version }) => {
                if handler.accepts(&version) {
                    let caps = handler.capabilities();
                    Message::HelloAck {
                        id,
                        version: handler.version().to_string(),
                        max_k: caps.max_k,
                        capacity: caps.capacity,
                    }
                } else {
                    Message::Error {
                        id,
                        message: format!("unsupported protocol version {version}; this endpoint speaks {}", handler.version()),
                    }
                }
            }
            Ok(Message::Predict { id, query }) => {
                let max_k = handler.capabilities().max_k;
                match query.to_query() {
                    Err(e) => Message::Error {
                        id,
                        message: format!("invalid query: {e}"),
                    },
                    Ok(q) if max_k > 0 && q.k > max_k => Message::Error {
                        id,
                        message: format!("k = {} exceeds max_k = {max_k}", q.k),
                    },
                    Ok(q) => match handler.predict(&q) {
                        Ok(trajs) => Message::Samples {
                            id,
                            trajectories: trajs.iter().map(Trajectory::to_flat).collect(),
                        },
                        Err(e) => Message::Error {
                            id,
                            message: e.to_string(),
                        },
                    },
                }
            }
            Ok(other) => Message::Error {
                id: other.id(),
                message: format!("unexpected {} message", other.kind()),
            },
        };
        writeln!(writer, "{}", to_line(&reply))?;
        writer.flush()?;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefMode {
    /// Perturbed constant-velocity human; never reads the plan.
    CausalCv,
    /// Same, plus a braking bias driven by the plan's late-segment speeds.
    Peeking,
}

impl std::str::FromStr for RefMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "causal-cv" => Ok(RefMode::CausalCv),
            "peeking" => Ok(RefMode::Peeking),
            other => Err(format!("unknown mode `{other}` (causal-cv | peeking)")),
        }
    }
}

/// Deliberate misbehavior for exercising clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Writes a non-JSON line before anything else.
    Garbage,
    /// Announces protocol version 2.0.
    FutureVersion,
    /// Returns one trajectory fewer than requested.
    DropOne,
    /// Ignores the seed and perturbs with a call counter instead.
    Unseeded,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "garbage" => Ok(Fault::Garbage),
            "future-version" => Ok(Fault::FutureVersion),
            "drop-one" => Ok(Fault::DropOne),
            "unseeded" => Ok(Fault::Unseeded),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

/// Maximum braking bias of the peeking mode (m/s²).
pub const PEEK_GAIN: f64 = 6.0;

/// Tiny reference endpoint used as a conformance fixture.
///
/// Sample `i` draws its speed perturbations from `seed.derive(i)`. In peeking
/// mode every step also brakes by
/// `PEEK_GAIN · sigmoid(mean late-plan speed − robot v0)`, where the late plan
/// is steps `t > ⌈0.4·T_H⌉`. Faster late plans therefore move the predicted
/// deceleration earlier, a leak a causal model cannot have.
#[derive(Debug, Clone)]
pub struct RefPredictor {
    pub mode: RefMode,
    /// Per-step speed perturbation std (m/s).
    pub speed_noise: f64,
    pub max_k: usize,
    pub fault: Option<Fault>,
    calls: u64,
}

impl RefPredictor {
    pub fn new(mode: RefMode) -> Self {
        Self {
            mode,
            speed_noise: 0.4,
            max_k: 4096,
            fault: None,
            calls: 0,
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// Runs [`serve`], applying stream-level faults.
    pub fn serve<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> io::Result<()> {
        if self.fault == Some(Fault::Garbage) {
            writeln!(writer, "this is not a protocol message")?;
            writer.flush()?;
        }
        serve(reader, writer, self)
    }

    fn braking(&self, query: &PredictionQuery) -> f64 {
        match self.mode {
            RefMode::CausalCv => 0.0,
            RefMode::Peeking => {
                let states = &query.robot_future.states;
                let horizon = states.len() - 1;
                let start = (horizon * 2).div_ceil(5) + 1;
                let late: Vec<f64> = states[start.min(horizon)..].iter().map(|x| x.v).collect();
                let mean = late.iter().sum::<f64>() / late.len() as f64;
                let x = mean - query.scenario.robot0.v;
                PEEK_GAIN / (1.0 + (-x).exp())
            }
        }
    }
}

impl Handler for RefPredictor {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_k: self.max_k,
            capacity: 1,
        }
    }

    fn version(&self) -> &str {
        if self.fault == Some(Fault::FutureVersion) {
            "2.0"
        } else {
            PROTOCOL_VERSION
        }
    }

    fn accepts(&self, version: &str) -> bool {
        self.fault == Some(Fault::FutureVersion) || major_version(version) == major_version(PROTOCOL_VERSION)
    }

    fn predict(&mut self, query: &PredictionQuery) -> Result<Vec<Trajectory>> {
        let dt = query.scenario.params.dt;
        let brake = self.braking(query);
        self.calls += 1;
        let seed = if self.fault == Some(Fault::Unseeded) {
            query.seed.derive(u64::MAX - self.calls)
        } else {
            query.seed
        };
        let k = if self.fault == Some(Fault::DropOne) {
            query.k - 1
        } else {
            query.k
        };
        (0..k as u64)
            .map(|i| {
                let mut rng = seed.derive(i).with_role(SeedRole::HumanNoise).rng();
                let mut states = Vec::with_capacity(query.scenario.horizon + 1);
                states.push(query.scenario.human0);
                for _ in 0..query.scenario.horizon {
                    let x = states[states.len() - 1];
                    let z = idm::normal(&mut rng);
                    states.push(AgentState::new(
                        x.s - dt * x.v,
                        (x.v - dt * brake + self.speed_noise * z).max(0.0),
                    ));
                }
                Trajectory::new(states)
            })
            .collect()
    }
}
