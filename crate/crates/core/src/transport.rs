//! Message schema and pluggable transport for agent↔coordinator traffic.
//!
//! The wire format is one JSON object per message, UTF-8, terminated by a
//! single linefeed, with the variant tag first and a fixed field order.
//! Integers are exact; reals use shortest round-trip decimals. The same
//! encoded lines flow through both the in-process channel (simulation mode)
//! and the TCP channel (distributed mode), so `bytes_exchanged` and replay
//! fixtures are transport-agnostic.
//!
//! A barrier round on the wire, in canonical order:
//! 1. one `sync_request` per triggering agent (the initial barrier at
//!    `time = 1` is requested by agent 0),
//! 2. one `counts_upload` per agent, ascending agent id,
//! 3. one `policy_broadcast` back to each agent,
//! 4. one `ack` per agent closing the round.
//!
//! Network mode is best-effort experimental: no retries, no failure
//! semantics; a dropped connection aborts the run.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{CoordinatorCore, SyncOptions};

#[derive(Debug, Error)]
pub enum TransportError {
    /// Malformed input that does not parse as a message line.
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    /// Well-formed JSON that violates the message schema (wrong dimensions,
    /// negative counts, unknown variant).
    #[error("schema error: {0}")]
    Schema(String),

    /// A violation of the barrier protocol (wrong message kind or count).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The coordinator failed to compute a policy (e.g. EVI divergence).
    #[error("coordinator failure: {0}")]
    Coordinator(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

type TResult<T> = std::result::Result<T, TransportError>;

/// The four wire messages. Counts travel as flat arrays with declared
/// `(states, actions)` dims; they are signed on the wire so that negative
/// values surface as schema errors rather than parse errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SyncMessage {
    /// An agent's request to synchronize; `time` is the global time index
    /// the new epoch starts at.
    SyncRequest { agent_id: u64, time: u64 },
    /// An agent's cumulative lifetime counters.
    CountsUpload {
        agent_id: u64,
        states: u64,
        actions: u64,
        transition_counts: Vec<i64>,
        reward_sums: Vec<f64>,
    },
    /// The coordinator's reply: the new policy and the aggregate visit
    /// counts backing the next epoch's triggers.
    PolicyBroadcast {
        epoch: u64,
        states: u64,
        actions: u64,
        policy: Vec<u64>,
        n_global: Vec<i64>,
    },
    /// Round-closing acknowledgement.
    Ack { epoch: u64 },
}

impl SyncMessage {
    fn validate(&self) -> TResult<()> {
        match self {
            SyncMessage::SyncRequest { .. } | SyncMessage::Ack { .. } => Ok(()),
            SyncMessage::CountsUpload {
                states,
                actions,
                transition_counts,
                reward_sums,
                ..
            } => {
                let (s, a) = (*states as usize, *actions as usize);
                if transition_counts.len() != s * a * s {
                    return Err(TransportError::Schema(format!(
                        "counts_upload transition_counts has {} entries, expected {}",
                        transition_counts.len(),
                        s * a * s
                    )));
                }
                if reward_sums.len() != s * a {
                    return Err(TransportError::Schema(format!(
                        "counts_upload reward_sums has {} entries, expected {}",
                        reward_sums.len(),
                        s * a
                    )));
                }
                if let Some(neg) = transition_counts.iter().find(|&&c| c < 0) {
                    return Err(TransportError::Schema(format!(
                        "counts_upload contains negative count {neg}"
                    )));
                }
                if let Some(neg) = reward_sums.iter().find(|&&r| r < 0.0) {
                    return Err(TransportError::Schema(format!(
                        "counts_upload contains negative reward sum {neg}"
                    )));
                }
                Ok(())
            }
            SyncMessage::PolicyBroadcast {
                states,
                actions,
                policy,
                n_global,
                ..
            } => {
                let (s, a) = (*states as usize, *actions as usize);
                if policy.len() != s {
                    return Err(TransportError::Schema(format!(
                        "policy_broadcast policy has {} entries, expected {}",
                        policy.len(),
                        s
                    )));
                }
                if policy.iter().any(|&x| x >= *actions) {
                    return Err(TransportError::Schema("policy entry out of action range".into()));
                }
                if n_global.len() != s * a {
                    return Err(TransportError::Schema(format!(
                        "policy_broadcast n_global has {} entries, expected {}",
                        n_global.len(),
                        s * a
                    )));
                }
                if let Some(neg) = n_global.iter().find(|&&c| c < 0) {
                    return Err(TransportError::Schema(format!(
                        "policy_broadcast contains negative count {neg}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Canonical serialization: one JSON line, linefeed-terminated.
pub fn encode(msg: &SyncMessage) -> TResult<String> {
    msg.validate()?;
    let mut line = serde_json::to_string(msg)
        .map_err(|e| TransportError::Schema(format!("unencodable message: {e}")))?;
    line.push('\n');
    Ok(line)
}

/// Inverse of [`encode`] on one complete line (the trailing linefeed is
/// optional). Rejects unknown variants, wrong-dimension arrays, and
/// negative counts.
pub fn decode(line: &str) -> TResult<SyncMessage> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    if body.contains('\n') {
        return Err(TransportError::Protocol("decode expects a single line".into()));
    }
    let msg: SyncMessage = serde_json::from_str(body).map_err(|e| TransportError::Parse {
        offset: e.column().saturating_sub(1),
        detail: e.to_string(),
    })?;
    msg.validate()?;
    Ok(msg)
}

/// One driver-side synchronization endpoint. `exchange` performs a whole
/// barrier: it moves the round's requests and uploads to the coordinator,
/// returns the per-agent policy broadcasts, and closes the round with acks.
pub trait SyncChannel {
    fn exchange(
        &mut self,
        requests: &[SyncMessage],
        uploads: &[SyncMessage],
    ) -> TResult<Vec<SyncMessage>>;

    /// Total encoded bytes moved in both directions so far.
    fn bytes_exchanged(&self) -> u64;

    /// All encoded lines in canonical order, when fixture recording is on.
    fn fixture_lines(&self) -> &[String];
}

/// Deterministic in-process channel: the coordinator runs behind a direct
/// call, but every message still passes through the canonical codec so byte
/// accounting and fixtures match the networked mode exactly.
pub struct InprocChannel {
    core: CoordinatorCore,
    n_agents: usize,
    bytes: u64,
    record_fixture: bool,
    fixture: Vec<String>,
}

impl InprocChannel {
    pub fn new(core: CoordinatorCore, n_agents: usize, record_fixture: bool) -> Self {
        InprocChannel {
            core,
            n_agents,
            bytes: 0,
            record_fixture,
            fixture: Vec::new(),
        }
    }

    fn note(&mut self, line: String) {
        self.bytes += line.len() as u64;
        if self.record_fixture {
            self.fixture.push(line);
        }
    }
}

impl SyncChannel for InprocChannel {
    fn exchange(
        &mut self,
        requests: &[SyncMessage],
        uploads: &[SyncMessage],
    ) -> TResult<Vec<SyncMessage>> {
        let mut decoded_requests = Vec::with_capacity(requests.len());
        for msg in requests {
            let line = encode(msg)?;
            decoded_requests.push(decode(&line)?);
            self.note(line);
        }
        let mut decoded_uploads = Vec::with_capacity(uploads.len());
        for msg in uploads {
            let line = encode(msg)?;
            decoded_uploads.push(decode(&line)?);
            self.note(line);
        }
        let broadcast = self.core.handle_round(&decoded_requests, &decoded_uploads)?;
        let mut replies = Vec::with_capacity(self.n_agents);
        let epoch = match &broadcast {
            SyncMessage::PolicyBroadcast { epoch, .. } => *epoch,
            _ => unreachable!("handle_round returns a broadcast"),
        };
        for _ in 0..self.n_agents {
            let line = encode(&broadcast)?;
            let reply = decode(&line)?;
            self.note(line);
            replies.push(reply);
        }
        for _ in 0..self.n_agents {
            let line = encode(&SyncMessage::Ack { epoch })?;
            self.note(line);
        }
        Ok(replies)
    }

    fn bytes_exchanged(&self) -> u64 {
        self.bytes
    }

    fn fixture_lines(&self) -> &[String] {
        &self.fixture
    }
}

/// Networked channel: one TCP connection per agent endpoint to a
/// coordinator server (see [`serve_session`]).
pub struct TcpChannel {
    conns: Vec<TcpConn>,
    bytes: u64,
    record_fixture: bool,
    fixture: Vec<String>,
}

struct TcpConn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpChannel {
    /// Opens `n_agents` connections to the coordinator at `addr`.
    pub fn connect<A: ToSocketAddrs>(addr: A, n_agents: usize, record_fixture: bool) -> TResult<Self> {
        let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
        let mut conns = Vec::with_capacity(n_agents);
        for _ in 0..n_agents {
            let stream = TcpStream::connect(addrs.as_slice())?;
            stream.set_nodelay(true)?;
            let reader = BufReader::new(stream.try_clone()?);
            conns.push(TcpConn { reader, writer: stream });
        }
        Ok(TcpChannel {
            conns,
            bytes: 0,
            record_fixture,
            fixture: Vec::new(),
        })
    }

    fn send(&mut self, agent: usize, msg: &SyncMessage) -> TResult<()> {
        let line = encode(msg)?;
        self.conns[agent].writer.write_all(line.as_bytes())?;
        self.bytes += line.len() as u64;
        if self.record_fixture {
            self.fixture.push(line);
        }
        Ok(())
    }

    fn recv(&mut self, agent: usize) -> TResult<SyncMessage> {
        let mut line = String::new();
        let n = self.conns[agent].reader.read_line(&mut line)?;
        if n == 0 {
            return Err(TransportError::Protocol("connection closed mid-round".into()));
        }
        let msg = decode(&line)?;
        self.bytes += line.len() as u64;
        if self.record_fixture {
            self.fixture.push(line);
        }
        Ok(msg)
    }

    fn agent_of(msg: &SyncMessage) -> TResult<usize> {
        match msg {
            SyncMessage::SyncRequest { agent_id, .. }
            | SyncMessage::CountsUpload { agent_id, .. } => Ok(*agent_id as usize),
            _ => Err(TransportError::Protocol("driver can only send requests and uploads".into())),
        }
    }
}

impl SyncChannel for TcpChannel {
    fn exchange(
        &mut self,
        requests: &[SyncMessage],
        uploads: &[SyncMessage],
    ) -> TResult<Vec<SyncMessage>> {
        for msg in requests {
            let agent = Self::agent_of(msg)?;
            self.send(agent, msg)?;
        }
        for msg in uploads {
            let agent = Self::agent_of(msg)?;
            self.send(agent, msg)?;
        }
        let mut replies = Vec::with_capacity(self.conns.len());
        let mut epoch = 0;
        for agent in 0..self.conns.len() {
            let reply = self.recv(agent)?;
            match &reply {
                SyncMessage::PolicyBroadcast { epoch: e, .. } => epoch = *e,
                other => {
                    return Err(TransportError::Protocol(format!(
                        "expected policy_broadcast, got {other:?}"
                    )))
                }
            }
            replies.push(reply);
        }
        for agent in 0..self.conns.len() {
            self.send(agent, &SyncMessage::Ack { epoch })?;
        }
        Ok(replies)
    }

    fn bytes_exchanged(&self) -> u64 {
        self.bytes
    }

    fn fixture_lines(&self) -> &[String] {
        &self.fixture
    }
}

/// Runs one coordinator session over an already-bound listener: accepts
/// `n_agents` connections, then serves barrier rounds until the driver
/// closes them. The barrier tolerates any arrival order across connections
/// within a round.
pub fn serve_session(
    listener: &TcpListener,
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
    opts: SyncOptions,
) -> TResult<()> {
    let mut core = CoordinatorCore::new(n_states, n_actions, n_agents, opts);
    let mut conns: Vec<TcpConn> = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        conns.push(TcpConn { reader, writer: stream });
    }
    let mut closed = vec![false; n_agents];
    loop {
        let mut requests = Vec::new();
        let mut uploads: Vec<Option<SyncMessage>> = vec![None; n_agents];
        let mut received = 0;
        let mut delivered = vec![false; n_agents];
        // Per round, each connection sends an optional request followed by
        // its upload; drain connections round-robin until all uploads are
        // in. A session ends when every connection closes between rounds.
        while received < n_agents {
            for (idx, conn) in conns.iter_mut().enumerate() {
                if closed[idx] || delivered[idx] {
                    continue;
                }
                loop {
                    let mut line = String::new();
                    let n = conn.reader.read_line(&mut line)?;
                    if n == 0 {
                        closed[idx] = true;
                        break;
                    }
                    match decode(&line)? {
                        msg @ SyncMessage::SyncRequest { .. } => requests.push(msg),
                        msg @ SyncMessage::CountsUpload { .. } => {
                            let agent = TcpChannel::agent_of(&msg)?;
                            if agent >= n_agents || uploads[agent].is_some() {
                                return Err(TransportError::Protocol(format!(
                                    "unexpected upload for agent {agent}"
                                )));
                            }
                            uploads[agent] = Some(msg);
                            delivered[idx] = true;
                            received += 1;
                            break;
                        }
                        other => {
                            return Err(TransportError::Protocol(format!(
                                "unexpected message {other:?}"
                            )))
                        }
                    }
                }
            }
            if closed.iter().all(|&c| c) {
                if received == 0 && requests.is_empty() {
                    return Ok(()); // clean shutdown between rounds
                }
                return Err(TransportError::Protocol("connection closed mid-round".into()));
            }
            if closed.iter().any(|&c| c) {
                return Err(TransportError::Protocol("connection closed mid-round".into()));
            }
        }
        let uploads: Vec<SyncMessage> = uploads.into_iter().map(|u| u.unwrap()).collect();
        let broadcast = core.handle_round(&requests, &uploads)?;
        let line = encode(&broadcast)?;
        for conn in conns.iter_mut() {
            conn.writer.write_all(line.as_bytes())?;
        }
        for conn in conns.iter_mut() {
            let mut ack = String::new();
            let n = conn.reader.read_line(&mut ack)?;
            if n == 0 {
                return Err(TransportError::Protocol("connection closed before ack".into()));
            }
            match decode(&ack)? {
                SyncMessage::Ack { .. } => {}
                other => {
                    return Err(TransportError::Protocol(format!("expected ack, got {other:?}")))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_has_the_canonical_form() {
        let line = encode(&SyncMessage::Ack { epoch: 3 }).unwrap();
        assert_eq!(line, "{\"type\":\"ack\",\"epoch\":3}\n");
    }

    #[test]
    fn decode_inverts_encode() {
        let msg = SyncMessage::CountsUpload {
            agent_id: 2,
            states: 2,
            actions: 1,
            transition_counts: vec![1, 0, 3, 4],
            reward_sums: vec![0.5, 2.0],
        };
        assert_eq!(decode(&encode(&msg).unwrap()).unwrap(), msg);
    }

    #[test]
    fn truncated_line_is_a_parse_error() {
        let line = encode(&SyncMessage::Ack { epoch: 3 }).unwrap();
        let truncated = &line[..line.len() - 3];
        assert!(matches!(decode(truncated), Err(TransportError::Parse { .. })));
    }

    #[test]
    fn unknown_variant_is_rejected() {
        assert!(decode("{\"type\":\"bogus\",\"epoch\":1}\n").is_err());
    }

    #[test]
    fn negative_count_is_a_schema_error() {
        let res = decode(
            "{\"type\":\"counts_upload\",\"agent_id\":0,\"states\":1,\"actions\":1,\"transition_counts\":[-3],\"reward_sums\":[0.0]}\n",
        );
        assert!(matches!(res, Err(TransportError::Schema(_))), "{res:?}");
    }

    #[test]
    fn wrong_dimension_is_a_schema_error() {
        let res = decode(
            "{\"type\":\"counts_upload\",\"agent_id\":0,\"states\":2,\"actions\":1,\"transition_counts\":[1,2,3],\"reward_sums\":[0.0,0.0]}\n",
        );
        assert!(matches!(res, Err(TransportError::Schema(_))), "{res:?}");
    }

    #[test]
    fn upload_bytes_grow_with_the_state_space() {
        let small = encode(&SyncMessage::CountsUpload {
            agent_id: 0,
            states: 2,
            actions: 1,
            transition_counts: vec![0; 4],
            reward_sums: vec![0.0; 2],
        })
        .unwrap();
        let large = encode(&SyncMessage::CountsUpload {
            agent_id: 0,
            states: 6,
            actions: 2,
            transition_counts: vec![0; 72],
            reward_sums: vec![0.0; 12],
        })
        .unwrap();
        assert!(large.len() > small.len());
    }
}
