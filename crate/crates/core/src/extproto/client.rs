use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::message::{parse_line, to_line, Message, WireQuery};
use super::{major_version, ProtocolError, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::predictors::{CausalClaim, PredictionQuery, Predictor};
use crate::types::{SampleSet, Trajectory};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "kebab-case")]
pub enum Transport {
    /// Launch a child process and talk over its standard streams. `command`
    /// is a whitespace-separated template; `{name}` placeholders are replaced
    /// from `args`.
    Child {
        command: String,
        #[serde(default)]
        args: BTreeMap<String, String>,
    },
    Tcp {
        address: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointDescriptor {
    #[serde(flatten)]
    pub transport: Transport,
    pub timeout_secs: f64,
}

impl EndpointDescriptor {
    pub fn child(command: impl Into<String>) -> Self {
        Self {
            transport: Transport::Child {
                command: command.into(),
                args: BTreeMap::new(),
            },
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }

    pub fn tcp(address: impl Into<String>) -> Self {
        Self {
            transport: Transport::Tcp {
                address: address.into(),
            },
            timeout_secs: DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }

    pub fn with_arg(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        if let Transport::Child { args, .. } = &mut self.transport {
            args.insert(name.into(), value.into());
        }
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    /// Parses `cmd:<template>` or `tcp:<host:port>`.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(command) = spec.strip_prefix("cmd:") {
            Ok(Self::child(command))
        } else if let Some(address) = spec.strip_prefix("tcp:") {
            Ok(Self::tcp(address))
        } else {
            Err(Error::Config(format!(
                "endpoint must start with `cmd:` or `tcp:`, got `{spec}`"
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!("endpoint timeout must be > 0, got {}", self.timeout_secs)));
        }
        if let Transport::Child { command, .. } = &self.transport {
            if command.split_whitespace().next().is_none() {
                return Err(Error::Config("endpoint command is empty".into()));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// The launch command after placeholder substitution.
    pub fn argv(&self) -> Result<Vec<String>> {
        let Transport::Child { command, args } = &self.transport else {
            return Err(Error::Config("tcp endpoints have no command".into()));
        };
        command
            .split_whitespace()
            .map(|word| {
                let mut out = word.to_string();
                for (name, value) in args {
                    out = out.replace(&format!("{{{name}}}"), value);
                }
                if out.contains('{') && out.contains('}') {
                    return Err(Error::Config(format!("unsubstituted placeholder in `{out}`")));
                }
                Ok(out)
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        match &self.transport {
            Transport::Child { .. } => self.argv().map_or_else(|_| "<invalid>".into(), |a| a.join(" ")),
            Transport::Tcp { address } => format!("tcp:{address}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub max_k: usize,
    pub capacity: usize,
}

enum ReadEvent {
    Line { offset: u64, text: String },
    Eof,
    Failed(String),
}

fn spawn_reader(source: impl Read + Send + 'static) -> Receiver<ReadEvent> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(source);
        let mut offset = 0u64;
        loop {
            let mut text = String::new();
            match reader.read_line(&mut text) {
                Ok(0) => {
                    let _ = tx.send(ReadEvent::Eof);
                    return;
                }
                Ok(n) => {
                    if tx.send(ReadEvent::Line { offset, text }).is_err() {
                        return;
                    }
                    offset += n as u64;
                }
                Err(e) => {
                    let _ = tx.send(ReadEvent::Failed(e.to_string()));
                    return;
                }
            }
        }
    });
    rx
}

/// An open, handshaken endpoint. One request is in flight at a time.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    events: Receiver<ReadEvent>,
    child: Option<Child>,
    timeout: Duration,
    next_id: u64,
    capabilities: Capabilities,
    name: String,
    closed: bool,
}

impl Connection {
    pub fn open(endpoint: &EndpointDescriptor) -> Result<Self, ProtocolError> {
        endpoint
            .validate()
            .map_err(|e| ProtocolError::Launch(e.to_string()))?;
        let (writer, events, child): (Box<dyn Write + Send>, _, _) = match &endpoint.transport {
            Transport::Child { .. } => {
                let argv = endpoint.argv().map_err(|e| ProtocolError::Launch(e.to_string()))?;
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ProtocolError::Launch(format!("{}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(stdout), Some(child))
            }
            Transport::Tcp { address } => {
                let stream = TcpStream::connect(address)?;
                let read_half = stream.try_clone()?;
                (Box::new(stream), spawn_reader(read_half), None)
            }
        };
        let mut conn = Self {
            writer,
            events,
            child,
            timeout: endpoint.timeout(),
            next_id: 0,
            capabilities: Capabilities { max_k: 0, capacity: 1 },
            name: endpoint.describe(),
            closed: false,
        };
        conn.capabilities = conn.hello()?;
        Ok(conn)
    }

    pub fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        let mut line = to_line(msg);
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::BrokenPipe => ProtocolError::Closed,
                _ => ProtocolError::Io(e),
            })
    }

    /// Next message answering request `id`; stale answers to earlier,
    /// abandoned requests are skipped.
    fn recv(&mut self, id: u64, waiting_for: &str) -> Result<Message, ProtocolError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.events.recv_timeout(left) {
                Ok(ReadEvent::Line { offset, text }) => {
                    if text.trim().is_empty() {
                        continue;
                    }
                    let msg = parse_line(&text, offset)?;
                    if msg.id() < id {
                        continue;
                    }
                    if msg.id() > id {
                        return Err(ProtocolError::Unexpected {
                            expected: format!("reply to request {id}"),
                            got: format!("{} with id {}", msg.kind(), msg.id()),
                        });
                    }
                    return Ok(msg);
                }
                Ok(ReadEvent::Eof) | Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
                Ok(ReadEvent::Failed(e)) => return Err(ProtocolError::Io(std::io::Error::other(e))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ProtocolError::Timeout {
                        after: self.timeout,
                        waiting_for: waiting_for.to_string(),
                    })
                }
            }
        }
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn hello(&mut self) -> Result<Capabilities, ProtocolError> {
        let id = self.fresh_id();
        self.send(&Message::Hello {
            id,
            version: PROTOCOL_VERSION.to_string(),
        })?;
        match self.recv(id, "hello_ack")? {
            Message::HelloAck {
                version,
                max_k,
                capacity,
                ..
            } => {
                if major_version(&version).is_none() || major_version(&version) != major_version(PROTOCOL_VERSION) {
                    return Err(ProtocolError::VersionMismatch {
                        ours: PROTOCOL_VERSION.to_string(),
                        theirs: version,
                    });
                }
                Ok(Capabilities {
                    max_k,
                    capacity: capacity.max(1),
                })
            }
            Message::Error { message, .. } => Err(ProtocolError::Remote(message)),
            other => Err(ProtocolError::Unexpected {
                expected: "hello_ack".into(),
                got: other.kind().into(),
            }),
        }
    }

    /// Sends one query and validates the returned trajectories.
    pub fn predict(&mut self, query: &PredictionQuery) -> Result<SampleSet, ProtocolError> {
        let id = self.fresh_id();
        self.send(&Message::Predict {
            id,
            query: WireQuery::from(query),
        })?;
        let trajectories = match self.recv(id, "samples")? {
            Message::Samples { trajectories, .. } => trajectories,
            Message::Error { message, .. } => return Err(ProtocolError::Remote(message)),
            other => {
                return Err(ProtocolError::Unexpected {
                    expected: "samples".into(),
                    got: other.kind().into(),
                })
            }
        };
        validate_samples(query, &trajectories)
    }

    pub fn shutdown(mut self) {
        self.close();
    }

    fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let id = self.fresh_id();
        let _ = self.send(&Message::Shutdown { id });
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                    _ => break,
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

fn validate_samples(query: &PredictionQuery, flat: &[Vec<f64>]) -> Result<SampleSet, ProtocolError> {
    if flat.len() != query.k {
        return Err(ProtocolError::Shape {
            expected: query.k,
            got: flat.len(),
        });
    }
    let horizon = query.scenario.horizon;
    let mut samples = Vec::with_capacity(flat.len());
    for (index, values) in flat.iter().enumerate() {
        let violation = |detail: String| ProtocolError::InvariantViolation { index, detail };
        let traj = Trajectory::from_flat(values).map_err(|e| violation(e.to_string()))?;
        if traj.horizon() != horizon {
            return Err(violation(format!("horizon {} != {horizon}", traj.horizon())));
        }
        if traj.states[0] != query.scenario.human0 {
            return Err(violation("does not start at the queried human state".into()));
        }
        samples.push(traj);
    }
    SampleSet::uniform(samples).map_err(|e| ProtocolError::InvariantViolation {
        index: 0,
        detail: e.to_string(),
    })
}

/// Opens the endpoint, reads its capabilities and shuts it down again.
pub fn handshake(endpoint: &EndpointDescriptor) -> Result<Capabilities, ProtocolError> {
    let conn = Connection::open(endpoint)?;
    let caps = conn.capabilities();
    conn.shutdown();
    Ok(caps)
}

pub fn remote_predict(conn: &mut Connection, query: &PredictionQuery) -> Result<SampleSet, ProtocolError> {
    conn.predict(query)
}

/// A predictor served by an external endpoint. Calls are serialized over a
/// single connection.
pub struct ExternalPredictor {
    tag: String,
    claim: CausalClaim,
    connection: Mutex<Connection>,
}

pub fn make_external(endpoint: &EndpointDescriptor) -> Result<ExternalPredictor> {
    let connection = Connection::open(endpoint)?;
    Ok(ExternalPredictor {
        tag: format!("external:{}", endpoint.describe()),
        claim: CausalClaim::Unknown,
        connection: Mutex::new(connection),
    })
}

impl ExternalPredictor {
    pub fn with_claim(mut self, claim: CausalClaim) -> Self {
        self.claim = claim;
        self
    }

    pub fn capabilities(&self) -> Capabilities {
        self.connection.lock().expect("connection lock").capabilities()
    }
}

impl Predictor for ExternalPredictor {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn causal_claim(&self) -> CausalClaim {
        self.claim
    }

    fn predict(&self, query: &PredictionQuery) -> Result<SampleSet> {
        query.validate()?;
        let mut conn = self
            .connection
            .lock()
            .map_err(|_| Error::predictor(&self.tag, "connection poisoned"))?;
        let max_k = conn.capabilities().max_k;
        if max_k > 0 && query.k > max_k {
            return Err(Error::predictor(
                &self.tag,
                format!("k = {} exceeds the endpoint's max_k = {max_k}", query.k),
            ));
        }
        Ok(conn.predict(query)?)
    }
}
