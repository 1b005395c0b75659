//! Line-delimited JSON protocol for querying external predictors, a client
//! that wraps an endpoint as a [`Predictor`](crate::predictors::Predictor), a
//! server loop for writing endpoints in Rust, and a conformance prober.
//!
//! See `docs/protocol.md` for the message reference.

use std::time::Duration;

use thiserror::Error;

mod client;
mod message;
mod probe;
mod server;

pub use client::{
    handshake, make_external, remote_predict, Capabilities, Connection, EndpointDescriptor, ExternalPredictor,
    Transport, DEFAULT_TIMEOUT,
};
pub use message::{parse_line, to_line, Message, WireQuery};
pub use probe::{probe, CheckResult, ConformanceReport};
pub use server::{serve, Fault, Handler, RefMode, RefPredictor, PEEK_GAIN};

pub const PROTOCOL_VERSION: &str = "1.0";

/// Major component of a `major.minor` version string.
pub fn major_version(version: &str) -> Option<u64> {
    version.split('.').next()?.trim().parse().ok()
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("timed out after {after:?} waiting for {waiting_for}")]
    Timeout { after: Duration, waiting_for: String },

    #[error("malformed message at byte {offset}: {detail}")]
    Malformed { offset: u64, detail: String },

    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: String, theirs: String },

    #[error("trajectory {index} violates invariants: {detail}")]
    InvariantViolation { index: usize, detail: String },

    #[error("determinism violation: {0}")]
    DeterminismViolation(String),

    #[error("remote error: {0}")]
    Remote(String),

    #[error("expected {expected} trajectories, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("expected {expected}, got {got}")]
    Unexpected { expected: String, got: String },

    #[error("endpoint closed the connection")]
    Closed,

    #[error("cannot launch endpoint: {0}")]
    Launch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn major_versions() {
        assert_eq!(major_version("1.0"), Some(1));
        assert_eq!(major_version("2"), Some(2));
        assert_eq!(major_version("x.1"), None);
    }
}
