use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::error::Result;
use crate::idm::RobotPlan;
use crate::predictors::PredictionQuery;
use crate::seed::SeedKey;
use crate::types::{AgentState, IdmParams, Scenario, Trajectory};

/// One protocol record. Serialized as a single JSON object per line with a
/// `kind` discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        id: u64,
        version: String,
    },
    HelloAck {
        id: u64,
        version: String,
        max_k: usize,
        capacity: usize,
    },
    Predict {
        id: u64,
        query: WireQuery,
    },
    /// Flat `[s0, v0, s1, v1, …]` human trajectories.
    Samples {
        id: u64,
        trajectories: Vec<Vec<f64>>,
    },
    Error {
        id: u64,
        message: String,
    },
    Shutdown {
        id: u64,
    },
}

impl Message {
    pub fn id(&self) -> u64 {
        match self {
            Message::Hello { id, .. }
            | Message::HelloAck { id, .. }
            | Message::Predict { id, .. }
            | Message::Samples { id, .. }
            | Message::Error { id, .. }
            | Message::Shutdown { id } => *id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::HelloAck { .. } => "hello_ack",
            Message::Predict { .. } => "predict",
            Message::Samples { .. } => "samples",
            Message::Error { .. } => "error",
            Message::Shutdown { .. } => "shutdown",
        }
    }
}

/// A [`PredictionQuery`] as sent over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireQuery {
    pub human0: AgentState,
    pub robot0: AgentState,
    pub params: IdmParams,
    pub horizon: usize,
    pub geometry: f64,
    pub collision_threshold: f64,
    /// Flat `[s0, v0, …, s_T, v_T]` robot plan.
    pub plan: Vec<f64>,
    pub k: usize,
    pub seed: SeedKey,
}

impl From<&PredictionQuery> for WireQuery {
    fn from(q: &PredictionQuery) -> Self {
        let sc = &q.scenario;
        Self {
            human0: sc.human0,
            robot0: sc.robot0,
            params: sc.params,
            horizon: sc.horizon,
            geometry: sc.geometry,
            collision_threshold: sc.collision_threshold,
            plan: q.robot_future.as_trajectory().to_flat(),
            k: q.k,
            seed: q.seed,
        }
    }
}

impl WireQuery {
    /// Rebuilds and validates the query.
    pub fn to_query(&self) -> Result<PredictionQuery> {
        let scenario = Scenario {
            human0: self.human0,
            robot0: self.robot0,
            params: self.params,
            horizon: self.horizon,
            geometry: self.geometry,
            collision_threshold: self.collision_threshold,
        };
        let plan = Trajectory::from_flat(&self.plan)?;
        let query = PredictionQuery {
            scenario,
            robot_future: RobotPlan::new(plan.states, self.params.dt)?,
            k: self.k,
            seed: self.seed,
        };
        query.validate()?;
        Ok(query)
    }
}

/// Serializes without the trailing newline.
pub fn to_line(msg: &Message) -> String {
    serde_json::to_string(msg).expect("protocol messages always serialize")
}

/// Parses one line; `line_offset` is the byte offset of the line in the
/// stream and is added to the parser's column for error reporting.
pub fn parse_line(line: &str, line_offset: u64) -> Result<Message, ProtocolError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| ProtocolError::Malformed {
        offset: line_offset + e.column().saturating_sub(1) as u64,
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::plan_accelerate;

    #[test]
    fn shutdown_line_is_compact() {
        assert_eq!(to_line(&Message::Shutdown { id: 7 }), r#"{"kind":"shutdown","id":7}"#);
    }

    #[test]
    fn query_round_trips() {
        let sc = Scenario::paper_toy();
        let q = PredictionQuery {
            scenario: sc,
            robot_future: plan_accelerate(&sc, 5.0, 10.0).unwrap(),
            k: 3,
            seed: SeedKey::new(11).derive(2),
        };
        let wire = WireQuery::from(&q);
        assert_eq!(wire.to_query().unwrap(), q);
        let msg = Message::Predict { id: 1, query: wire };
        assert_eq!(parse_line(&to_line(&msg), 0).unwrap(), msg);
    }

    #[test]
    fn garbage_reports_byte_offset() {
        match parse_line("{\"kind\":\"hello\",\"id\":x}", 100) {
            Err(ProtocolError::Malformed { offset, .. }) => assert_eq!(offset, 121),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_malformed() {
        assert!(matches!(
            parse_line(r#"{"kind":"nope","id":1}"#, 0),
            Err(ProtocolError::Malformed { .. })
        ));
    }
}
