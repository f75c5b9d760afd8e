//! Virtual-time message bus over a star topology: every agent talks only to
//! the Watcher. Links add latency, uniform jitter and random drops drawn from
//! per-link RNG streams derived from the scenario seed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::ids::{AgentId, AgentKind, NodeId};
use crate::watcher::ConstraintMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("link {src} -> {dst} is not part of the star topology")]
    TopologyViolation { src: NodeId, dst: NodeId },
}

/// Latency, jitter (uniform half-width) and drop probability of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkModel {
    pub base_latency: f64,
    pub jitter: f64,
    pub drop_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { base_latency: 0.0, jitter: 0.0, drop_prob: 0.0 }
    }
}

impl LinkModel {
    pub fn min_latency(&self) -> f64 {
        (self.base_latency - self.jitter).max(0.0)
    }

    pub fn max_latency(&self) -> f64 {
        self.base_latency + self.jitter
    }
}

/// Interval `[start, end)` during which every message is lost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub start: f64,
    pub end: f64,
}

impl Outage {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Localization estimate of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pose {
    Uav(Vec3),
    Ugv { x: f64, y: f64, theta: f64 },
}

/// Setpoint for the nominal controller, extrapolated by receivers as
/// `position + rate * (now - send_time)`. UGV setpoints live in the offset
/// plane and ignore `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vec3,
    pub rate: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    PoseUpdate(Pose),
    SetpointUpdate(Setpoint),
    ConstraintMatrixUpdate(ConstraintMatrix),
    LandingSignal,
    TouchdownAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MsgType {
    PoseUpdate,
    SetpointUpdate,
    ConstraintMatrixUpdate,
    LandingSignal,
    TouchdownAck,
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::PoseUpdate(_) => MsgType::PoseUpdate,
            Payload::SetpointUpdate(_) => MsgType::SetpointUpdate,
            Payload::ConstraintMatrixUpdate(_) => MsgType::ConstraintMatrixUpdate,
            Payload::LandingSignal => MsgType::LandingSignal,
            Payload::TouchdownAck => MsgType::TouchdownAck,
        }
    }

    /// Encoded size used for link accounting. Constraint matrices ship at
    /// full capacity, zero rows included.
    pub fn wire_size(&self) -> usize {
        match self {
            Payload::PoseUpdate(_) => 24,
            Payload::SetpointUpdate(_) => 48,
            Payload::ConstraintMatrixUpdate(m) => 24 + m.capacity() * (m.dim() + 1) * 8,
            Payload::LandingSignal | Payload::TouchdownAck => 0,
        }
    }
}

const HEADER_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub send_time: f64,
    pub deliver_time: f64,
    /// Per-(src, dst) counter starting at 0.
    pub seq: u64,
    pub payload: Payload,
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }
}

/// Per-directed-link counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

/// One line of the message trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub event: TraceEvent,
    pub src: NodeId,
    pub dst: NodeId,
    pub seq: u64,
    #[serde(rename = "type")]
    pub msg_type: MsgType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deliver_t: Option<f64>,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceEvent {
    Send,
    Deliver,
    Drop,
}

fn node_code(n: NodeId) -> u64 {
    match n {
        NodeId::Watcher => 0,
        NodeId::Agent(AgentId { kind: AgentKind::Uav, index }) => 1 + 2 * u64::from(index),
        NodeId::Agent(AgentId { kind: AgentKind::Ugv, index }) => 2 + 2 * u64::from(index),
    }
}

fn link_code(src: NodeId, dst: NodeId) -> u64 {
    (node_code(src) << 32) | node_code(dst)
}

struct Queued(Message);

impl Queued {
    fn key(&self) -> (f64, u64, u64) {
        (self.0.deliver_time, self.0.seq, link_code(self.0.src, self.0.dst))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops the earliest delivery first.
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, sa, la) = self.key();
        let (tb, sb, lb) = other.key();
        tb.total_cmp(&ta).then(sb.cmp(&sa)).then(lb.cmp(&la))
    }
}

/// The simulated network. Owns the event queue; nodes only call
/// [`Network::send`] and receive what [`Network::deliver_due`] returns.
pub struct Network {
    model: LinkModel,
    outages: Vec<Outage>,
    seed: u64,
    agents: BTreeSet<AgentId>,
    rngs: BTreeMap<(NodeId, NodeId), ChaCha8Rng>,
    seqs: BTreeMap<(NodeId, NodeId), u64>,
    stats: BTreeMap<(NodeId, NodeId), LinkStats>,
    queue: BinaryHeap<Queued>,
    trace: Option<Vec<TraceRecord>>,
}

impl Network {
    pub fn new(model: LinkModel, seed: u64, agents: impl IntoIterator<Item = AgentId>) -> Self {
        Self {
            model,
            outages: Vec::new(),
            seed,
            agents: agents.into_iter().collect(),
            rngs: BTreeMap::new(),
            seqs: BTreeMap::new(),
            stats: BTreeMap::new(),
            queue: BinaryHeap::new(),
            trace: None,
        }
    }

    pub fn with_outages(mut self, outages: Vec<Outage>) -> Self {
        self.outages = outages;
        self
    }

    /// Record every send/deliver/drop event.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    fn check_star(&self, src: NodeId, dst: NodeId) -> Result<(), NetError> {
        let ok = match (src, dst) {
            (NodeId::Watcher, NodeId::Agent(a)) | (NodeId::Agent(a), NodeId::Watcher) => self.agents.contains(&a),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(NetError::TopologyViolation { src, dst })
        }
    }

    /// Send a payload at virtual time `now`. Returns the sequence number
    /// assigned on the link.
    pub fn send(&mut self, src: NodeId, dst: NodeId, payload: Payload, now: f64) -> Result<u64, NetError> {
        self.check_star(src, dst)?;
        let key = (src, dst);
        let seed = self.seed;
        let rng = self.rngs.entry(key).or_insert_with(|| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(link_code(src, dst));
            r
        });
        // Both draws happen on every send so a link's stream position depends
        // only on how many messages it has carried.
        let u_drop: f64 = rng.random();
        let u_jitter: f64 = rng.random();

        let seq_slot = self.seqs.entry(key).or_insert(0);
        let seq = *seq_slot;
        *seq_slot += 1;

        let bytes = HEADER_BYTES + payload.wire_size();
        let msg_type = payload.msg_type();
        let stats = self.stats.entry(key).or_default();
        stats.sent += 1;
        stats.bytes += bytes as u64;

        let lost = u_drop < self.model.drop_prob || self.outages.iter().any(|o| o.contains(now));
        if lost {
            stats.dropped += 1;
            if let Some(trace) = &mut self.trace {
                trace.push(TraceRecord { t: now, event: TraceEvent::Drop, src, dst, seq, msg_type, deliver_t: None, bytes });
            }
            return Ok(seq);
        }
        let jitter = (2.0 * u_jitter - 1.0) * self.model.jitter;
        let deliver_time = (now + self.model.base_latency + jitter).max(now);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                t: now,
                event: TraceEvent::Send,
                src,
                dst,
                seq,
                msg_type,
                deliver_t: Some(deliver_time),
                bytes,
            });
        }
        self.queue.push(Queued(Message { src, dst, send_time: now, deliver_time, seq, payload }));
        Ok(seq)
    }

    /// Every message with `deliver_time <= now`, ordered by delivery time,
    /// then sequence number, then link.
    pub fn deliver_due(&mut self, now: f64) -> Vec<Message> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|q| q.0.deliver_time <= now) {
            let Queued(msg) = self.queue.pop().expect("peeked");
            let bytes = HEADER_BYTES + msg.payload.wire_size();
            self.stats.entry((msg.src, msg.dst)).or_default().delivered += 1;
            if let Some(trace) = &mut self.trace {
                trace.push(TraceRecord {
                    t: now,
                    event: TraceEvent::Deliver,
                    src: msg.src,
                    dst: msg.dst,
                    seq: msg.seq,
                    msg_type: msg.msg_type(),
                    deliver_t: Some(msg.deliver_time),
                    bytes,
                });
            }
            out.push(msg);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    /// Counters per directed link that carried at least one message.
    pub fn link_stats(&self) -> &BTreeMap<(NodeId, NodeId), LinkStats> {
        &self.stats
    }

    /// Undirected agent links observed so far.
    pub fn active_links(&self) -> BTreeSet<AgentId> {
        self.stats.keys().filter_map(|(s, d)| s.agent().or(d.agent())).collect()
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }
}

/// Links needed when every one of `agents` talks only to a central node.
pub fn star_link_count(agents: usize) -> usize {
    agents
}

/// Directed links needed when every agent talks to every other agent.
pub fn full_mesh_link_count(agents: usize) -> usize {
    agents * agents.saturating_sub(1)
}
