//! The Watcher: centralized edge node that sees every agent's localization,
//! estimates velocities, picks each agent's proximal neighbours, assembles
//! its fixed-capacity constraint matrix, runs landing orchestration and
//! decides what each agent receives on its star link.
//!
//! Matrix row order is fixed: box faces, then AGO (UAV) or GG (UGV) rows,
//! then for UAVs the AGC row followed by AA rows. Rows past `active_count`
//! are zero.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::agent::{nid_offset, UgvState};
use crate::cbf::{
    build_constraint_row, eval_landing, BoxFace, BoxPoint, CbfError, ConstraintRow, Motion, RowKind, RowSpec,
    SafetyParams,
};
use crate::geometry::{Vec2, Vec3};
use crate::ids::{AgentId, AgentKind, NodeId};
use crate::netsim::{Payload, Pose, Setpoint};
use crate::task::SetpointPath;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WatcherError {
    #[error("{agent} needs {needed} rows but the matrix capacity is {capacity}")]
    CapacityExceeded { agent: AgentId, needed: usize, capacity: usize },
    #[error("unknown pair {0}")]
    UnknownPair(u32),
    #[error("no pose for {0}")]
    MissingPose(AgentId),
    #[error(transparent)]
    Cbf(#[from] CbfError),
}

/// Row metadata kept alongside the numeric `A`, `b` arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowTag {
    pub kind: RowKind,
    pub other_id: Option<AgentId>,
    pub h_value: f64,
}

/// `A` (capacity x dim, row major) and `b` (capacity), zero-initialised and
/// filled from the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub agent: AgentId,
    pub timestamp: f64,
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    tags: Vec<RowTag>,
}

impl ConstraintMatrix {
    pub fn zeros(agent: AgentId, timestamp: f64, capacity: usize, dim: usize) -> Self {
        Self { agent, timestamp, dim, a: vec![0.0; capacity * dim], b: vec![0.0; capacity], tags: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn active_count(&self) -> usize {
        self.tags.len()
    }

    pub fn push(&mut self, row: &ConstraintRow) -> Result<(), WatcherError> {
        let i = self.tags.len();
        if i >= self.capacity() {
            return Err(WatcherError::CapacityExceeded {
                agent: self.agent,
                needed: i + 1,
                capacity: self.capacity(),
            });
        }
        debug_assert_eq!(row.a.len(), self.dim);
        self.a[i * self.dim..(i + 1) * self.dim].copy_from_slice(&row.a);
        self.b[i] = row.b;
        self.tags.push(RowTag { kind: row.kind, other_id: row.other_id, h_value: row.h_value });
        Ok(())
    }

    pub fn row_a(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_b(&self, i: usize) -> f64 {
        self.b[i]
    }

    pub fn tags(&self) -> &[RowTag] {
        &self.tags
    }

    pub fn active_rows(&self) -> Vec<ConstraintRow> {
        self.tags
            .iter()
            .enumerate()
            .map(|(i, t)| ConstraintRow {
                a: self.row_a(i).to_vec(),
                b: self.b[i],
                kind: t.kind,
                other_id: t.other_id,
                h_value: t.h_value,
            })
            .collect()
    }

    pub fn count(&self, kind: RowKind) -> usize {
        self.tags.iter().filter(|t| t.kind == kind).count()
    }

    /// Rows at index `>= active_count` are identically zero.
    pub fn padding_is_zero(&self) -> bool {
        let n = self.active_count();
        self.a[n * self.dim..].iter().all(|v| *v == 0.0) && self.b[n..].iter().all(|v| *v == 0.0)
    }

    pub fn kinds(&self) -> Vec<RowKind> {
        self.tags.iter().map(|t| t.kind).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateQuality {
    /// One finite difference so far.
    Fresh,
    /// Exponentially smoothed over several differences.
    Smoothed,
    /// No trustworthy estimate; consumers use the speed bound.
    WorstCase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub v: Vec3,
    /// Time since the newest sample.
    pub age: f64,
    pub quality: EstimateQuality,
}

/// Exponentially smoothed finite-difference velocity estimator. The first
/// difference initialises the estimate; later ones are blended in with
/// weight `smoothing`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityEstimator {
    smoothing: f64,
    stale_after: f64,
    last: Option<(f64, Vec3)>,
    estimate: Option<Vec3>,
    differences: usize,
}

impl VelocityEstimator {
    pub fn new(smoothing: f64, stale_after: f64) -> Self {
        Self { smoothing, stale_after, last: None, estimate: None, differences: 0 }
    }

    pub fn update(&mut self, t: f64, p: Vec3) {
        if let Some((t0, p0)) = self.last {
            if t <= t0 {
                return;
            }
            let fd = (p - p0) * (1.0 / (t - t0));
            self.estimate = Some(match self.estimate {
                None => fd,
                Some(prev) => fd * self.smoothing + prev * (1.0 - self.smoothing),
            });
            self.differences += 1;
        }
        self.last = Some((t, p));
    }

    pub fn estimate(&self, now: f64) -> VelocityEstimate {
        let age = self.last.map_or(f64::INFINITY, |(t, _)| now - t);
        match self.estimate {
            Some(v) if age <= self.stale_after => VelocityEstimate {
                v,
                age,
                quality: if self.differences > 1 { EstimateQuality::Smoothed } else { EstimateQuality::Fresh },
            },
            _ => VelocityEstimate { v: Vec3::ZERO, age, quality: EstimateQuality::WorstCase },
        }
    }
}

/// Velocity estimate from a time-ordered pose history, evaluated at `now`.
pub fn estimate_velocity(history: &[(f64, Vec3)], smoothing: f64, stale_after: f64, now: f64) -> VelocityEstimate {
    let mut est = VelocityEstimator::new(smoothing, stale_after);
    for &(t, p) in history {
        est.update(t, p);
    }
    est.estimate(now)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPhase {
    Task,
    Landing,
    Landed,
}

/// UAV `i` is paired with UGV `i`; only the phase varies.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingTable {
    phases: Vec<PairPhase>,
}

impl PairingTable {
    pub fn new(n_pairs: usize) -> Self {
        Self { phases: vec![PairPhase::Task; n_pairs] }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phase(&self, pair: u32) -> Option<PairPhase> {
        self.phases.get(pair as usize).copied()
    }

    fn set(&mut self, pair: u32, phase: PairPhase) {
        self.phases[pair as usize] = phase;
    }

    pub fn partner(&self, id: AgentId) -> Option<AgentId> {
        ((id.index as usize) < self.phases.len()).then(|| id.partner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TouchdownConfig {
    /// Squared horizontal distance threshold (m^2).
    pub l_touch: f64,
    /// Height tolerance above `gamma` (m).
    pub dz: f64,
    /// Time the thresholds must hold (s).
    pub hold: f64,
}

impl Default for TouchdownConfig {
    fn default() -> Self {
        Self { l_touch: 0.01, dz: 0.02, hold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WatcherConfig {
    pub period: f64,
    /// Extra activation distance beyond each safety radius.
    pub margin: f64,
    pub hysteresis: f64,
    pub smoothing: f64,
    pub stale_after: f64,
    pub touchdown: TouchdownConfig,
    pub capacity: usize,
    /// Use worst-case time terms for every time-varying row.
    pub conservative: bool,
    /// Gate AA/GG/AGO rows by proximity; when false every pair is active.
    pub gate_by_proximity: bool,
}

impl WatcherConfig {
    /// Worst-case closing distance over one Watcher period plus the largest
    /// network delay, plus half a meter.
    pub fn default_margin(v_bar: f64, period: f64, max_latency: f64) -> f64 {
        2.0 * v_bar * (period + max_latency) + 0.5
    }
}

/// Activation test with hysteresis: activate below `d_act`, stay active
/// until `d_act + hysteresis` is reached.
pub fn is_proximal(distance: f64, d_act: f64, hysteresis: f64, was_active: bool) -> bool {
    if was_active {
        distance < d_act + hysteresis
    } else {
        distance < d_act
    }
}

/// Latest localization sample and derived quantities for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentPose {
    Uav(Vec3),
    Ugv { body: UgvState },
}

impl AgentPose {
    fn as_pose(&self) -> Pose {
        match *self {
            AgentPose::Uav(p) => Pose::Uav(p),
            AgentPose::Ugv { body } => Pose::Ugv { x: body.x, y: body.y, theta: body.theta },
        }
    }
}

/// Per-agent proximal sets over current poses, given the previous sets for
/// hysteresis.
pub fn proximal_set(
    agent: AgentId,
    poses: &BTreeMap<AgentId, AgentPose>,
    params: &SafetyParams,
    margin: f64,
    hysteresis: f64,
    previous: &BTreeSet<AgentId>,
    excluded: &BTreeSet<AgentId>,
) -> BTreeSet<AgentId> {
    let mut out = BTreeSet::new();
    let Some(me) = poses.get(&agent) else { return out };
    if excluded.contains(&agent) {
        return out;
    }
    for (&other, pose) in poses {
        if other == agent || excluded.contains(&other) {
            continue;
        }
        let (distance, radius) = match (me, pose) {
            (AgentPose::Uav(p), AgentPose::Uav(q)) => ((*p - *q).norm(), params.s_a),
            (AgentPose::Uav(p), AgentPose::Ugv { body }) => {
                if other.index == agent.index {
                    continue;
                }
                ((*p - params.platform(body.position())).norm(), params.s_ag)
            }
            (AgentPose::Ugv { body: a }, AgentPose::Ugv { body: b }) => ((nid_offset(a) - nid_offset(b)).norm(), params.s_g),
            (AgentPose::Ugv { .. }, AgentPose::Uav(_)) => continue,
        };
        if is_proximal(distance, radius + margin, hysteresis, previous.contains(&other)) {
            out.insert(other);
        }
    }
    out
}

/// Decision-log record emitted per agent per tick, or on phase transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum WatcherRecord {
    Matrix {
        t: f64,
        agent: AgentId,
        rows: usize,
        kinds: Vec<RowKind>,
        proximal: Vec<AgentId>,
    },
    Phase {
        t: f64,
        pair: u32,
        phase: PairPhase,
    },
    Rejected {
        t: f64,
        pair: u32,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandingOutcome {
    Started,
    AlreadyLanding,
    AlreadyLanded,
}

struct Tracked {
    pose: AgentPose,
    stamp: f64,
    /// UAV position, or UGV body point at platform height.
    body: VelocityEstimator,
    /// UGV offset point (unused for UAVs).
    offset: VelocityEstimator,
}

pub struct Watcher {
    params: SafetyParams,
    config: WatcherConfig,
    pairing: PairingTable,
    tracked: BTreeMap<AgentId, Tracked>,
    offsets: BTreeMap<AgentId, (f64, f64)>,
    tasks: BTreeMap<AgentId, SetpointPath>,
    proximal: BTreeMap<AgentId, BTreeSet<AgentId>>,
    touchdown_since: BTreeMap<u32, f64>,
    touchdown_time: BTreeMap<u32, f64>,
    pending: Vec<(NodeId, Payload)>,
    records: Vec<WatcherRecord>,
}

impl Watcher {
    /// `ugv_geometry` maps each UGV to its `(offset, wheel_base)`.
    pub fn new(
        params: SafetyParams,
        config: WatcherConfig,
        n_pairs: usize,
        ugv_geometry: BTreeMap<AgentId, (f64, f64)>,
        tasks: BTreeMap<AgentId, SetpointPath>,
    ) -> Self {
        Self {
            params,
            config,
            pairing: PairingTable::new(n_pairs),
            tracked: BTreeMap::new(),
            offsets: ugv_geometry,
            tasks,
            proximal: BTreeMap::new(),
            touchdown_since: BTreeMap::new(),
            touchdown_time: BTreeMap::new(),
            pending: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn params(&self) -> &SafetyParams {
        &self.params
    }

    pub fn config(&self) -> &WatcherConfig {
        &self.config
    }

    pub fn pairing(&self) -> &PairingTable {
        &self.pairing
    }

    pub fn touchdown_time(&self, pair: u32) -> Option<f64> {
        self.touchdown_time.get(&pair).copied()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        let n = self.pairing.len() as u32;
        (0..n).map(AgentId::uav).chain((0..n).map(AgentId::ugv))
    }

    pub fn take_records(&mut self) -> Vec<WatcherRecord> {
        std::mem::take(&mut self.records)
    }

    fn is_landed(&self, id: AgentId) -> bool {
        id.is_uav() && self.pairing.phase(id.index) == Some(PairPhase::Landed)
    }

    /// Ingest one localization sample. UGV samples are `(x, y, theta)`.
    pub fn observe(&mut self, id: AgentId, pose: Pose, t: f64) {
        let (smoothing, stale) = (self.config.smoothing, self.config.stale_after);
        let agent_pose = match pose {
            Pose::Uav(p) => AgentPose::Uav(p),
            Pose::Ugv { x, y, theta } => {
                let (offset, wheel_base) = self.offsets.get(&id).copied().unwrap_or((0.1, 0.2));
                AgentPose::Ugv { body: UgvState { x, y, theta, offset, wheel_base } }
            }
        };
        let entry = self.tracked.entry(id).or_insert_with(|| Tracked {
            pose: agent_pose,
            stamp: t,
            body: VelocityEstimator::new(smoothing, stale),
            offset: VelocityEstimator::new(smoothing, stale),
        });
        entry.pose = agent_pose;
        entry.stamp = t;
        match agent_pose {
            AgentPose::Uav(p) => entry.body.update(t, p),
            AgentPose::Ugv { body } => {
                entry.body.update(t, body.position().with_z(0.0));
                entry.offset.update(t, nid_offset(&body).with_z(0.0));
            }
        }
    }

    pub fn poses(&self) -> BTreeMap<AgentId, AgentPose> {
        self.tracked.iter().map(|(id, t)| (*id, t.pose)).collect()
    }

    pub fn velocity_estimate(&self, id: AgentId, now: f64) -> Option<VelocityEstimate> {
        self.tracked.get(&id).map(|t| t.body.estimate(now))
    }

    fn motion3(&self, id: AgentId, now: f64) -> Motion<Vec3> {
        let est = self.tracked.get(&id).map(|t| t.body.estimate(now));
        match est {
            Some(e) if !self.config.conservative && e.quality != EstimateQuality::WorstCase => Motion::Known(e.v),
            _ => Motion::WorstCase { speed: self.params.v_bar * 3f64.sqrt() },
        }
    }

    fn motion2(&self, id: AgentId, now: f64, offset_point: bool) -> Motion<Vec2> {
        let est = self.tracked.get(&id).map(|t| if offset_point { t.offset.estimate(now) } else { t.body.estimate(now) });
        match est {
            Some(e) if !self.config.conservative && e.quality != EstimateQuality::WorstCase => Motion::Known(e.v.xy()),
            _ => Motion::WorstCase { speed: self.params.v_g * 2f64.sqrt() },
        }
    }

    fn ugv_body(&self, id: AgentId) -> Result<UgvState, WatcherError> {
        match self.tracked.get(&id).map(|t| t.pose) {
            Some(AgentPose::Ugv { body }) => Ok(body),
            _ => Err(WatcherError::MissingPose(id)),
        }
    }

    fn uav_position(&self, id: AgentId) -> Result<Vec3, WatcherError> {
        match self.tracked.get(&id).map(|t| t.pose) {
            Some(AgentPose::Uav(p)) => Ok(p),
            _ => Err(WatcherError::MissingPose(id)),
        }
    }

    /// Refresh every agent's proximal set from current poses.
    pub fn update_proximity(&mut self) {
        let poses = self.poses();
        let excluded: BTreeSet<AgentId> = poses.keys().copied().filter(|id| self.is_landed(*id)).collect();
        let mut next = BTreeMap::new();
        for &id in poses.keys() {
            let set = if self.config.gate_by_proximity {
                let prev = self.proximal.get(&id).cloned().unwrap_or_default();
                proximal_set(id, &poses, &self.params, self.config.margin, self.config.hysteresis, &prev, &excluded)
            } else {
                proximal_set(id, &poses, &self.params, f64::INFINITY, 0.0, &BTreeSet::new(), &excluded)
            };
            next.insert(id, set);
        }
        self.proximal = next;
    }

    pub fn proximal_of(&self, id: AgentId) -> BTreeSet<AgentId> {
        self.proximal.get(&id).cloned().unwrap_or_default()
    }

    /// Build one agent's matrix from current poses, estimates and proximal set.
    pub fn assemble_constraints(&self, agent: AgentId, now: f64) -> Result<ConstraintMatrix, WatcherError> {
        let proximal = self.proximal_of(agent);
        let params = &self.params;
        match agent.kind {
            AgentKind::Uav => {
                let mut m = ConstraintMatrix::zeros(agent, now, self.config.capacity, 3);
                if self.is_landed(agent) {
                    return Ok(m);
                }
                let p = self.uav_position(agent)?;
                for face in BoxFace::UAV {
                    m.push(&build_constraint_row(RowSpec::Box { point: BoxPoint::Uav(p), face }, params)?)?;
                }
                for other in proximal.iter().filter(|o| o.kind == AgentKind::Ugv) {
                    let g = self.ugv_body(*other)?;
                    let spec = RowSpec::Ago {
                        own: p,
                        ugv: g.position(),
                        ugv_motion: Some(self.motion2(*other, now, false)),
                        other_id: Some(*other),
                    };
                    m.push(&build_constraint_row(spec, params)?)?;
                }
                let own_ugv = agent.partner();
                let g = self.ugv_body(own_ugv)?;
                let spec = RowSpec::Agc {
                    own: p,
                    ugv: g.position(),
                    ugv_motion: Some(self.motion2(own_ugv, now, false)),
                    other_id: Some(own_ugv),
                };
                m.push(&build_constraint_row(spec, params)?)?;
                for other in proximal.iter().filter(|o| o.kind == AgentKind::Uav) {
                    let q = self.uav_position(*other)?;
                    let spec = RowSpec::Aa {
                        own: p,
                        other: q,
                        other_motion: Some(self.motion3(*other, now)),
                        other_id: Some(*other),
                    };
                    m.push(&build_constraint_row(spec, params)?)?;
                }
                Ok(m)
            }
            AgentKind::Ugv => {
                let mut m = ConstraintMatrix::zeros(agent, now, self.config.capacity, 2);
                let rho = nid_offset(&self.ugv_body(agent)?);
                for face in BoxFace::UGV {
                    m.push(&build_constraint_row(RowSpec::Box { point: BoxPoint::Ugv(rho), face }, params)?)?;
                }
                for other in proximal.iter().filter(|o| o.kind == AgentKind::Ugv) {
                    let spec = RowSpec::Gg {
                        own: rho,
                        other: nid_offset(&self.ugv_body(*other)?),
                        other_motion: Some(self.motion2(*other, now, true)),
                        other_id: Some(*other),
                    };
                    m.push(&build_constraint_row(spec, params)?)?;
                }
                Ok(m)
            }
        }
    }

    /// Switch a pair to landing. Effects reach the UAV with the next dispatch.
    pub fn handle_landing_signal(&mut self, pair: u32, now: f64) -> Result<LandingOutcome, WatcherError> {
        match self.pairing.phase(pair) {
            None => {
                warn!("landing signal for unknown pair {pair} rejected");
                self.records.push(WatcherRecord::Rejected { t: now, pair, reason: "unknown pair".into() });
                Err(WatcherError::UnknownPair(pair))
            }
            Some(PairPhase::Task) => {
                self.pairing.set(pair, PairPhase::Landing);
                self.pending.push((NodeId::Agent(AgentId::uav(pair)), Payload::LandingSignal));
                self.records.push(WatcherRecord::Phase { t: now, pair, phase: PairPhase::Landing });
                Ok(LandingOutcome::Started)
            }
            Some(PairPhase::Landing) => Ok(LandingOutcome::AlreadyLanding),
            Some(PairPhase::Landed) => {
                warn!("landing signal for pair {pair} which has already landed");
                Ok(LandingOutcome::AlreadyLanded)
            }
        }
    }

    /// Advance the touchdown timer of a landing pair; returns true on the
    /// tick the pair is declared landed.
    pub fn detect_touchdown(&mut self, pair: u32, now: f64) -> Result<bool, WatcherError> {
        if self.pairing.phase(pair) != Some(PairPhase::Landing) {
            return Ok(false);
        }
        let p = self.uav_position(AgentId::uav(pair))?;
        let g = self.params.platform(self.ugv_body(AgentId::ugv(pair))?.position());
        let ev = eval_landing(p, g, self.params.alpha, self.params.beta, self.params.gamma)?;
        let rz = p.z - g.z;
        let td = self.config.touchdown;
        // Sub-nanosecond slack absorbs rounding in tick times.
        let within = ev.l <= td.l_touch && rz <= self.params.gamma + td.dz;
        if !within {
            self.touchdown_since.remove(&pair);
            return Ok(false);
        }
        let since = *self.touchdown_since.entry(pair).or_insert(now);
        if now - since + 1e-9 >= td.hold {
            self.pairing.set(pair, PairPhase::Landed);
            self.touchdown_time.insert(pair, now);
            self.touchdown_since.remove(&pair);
            self.pending.push((NodeId::Agent(AgentId::uav(pair)), Payload::TouchdownAck));
            self.records.push(WatcherRecord::Phase { t: now, pair, phase: PairPhase::Landed });
            return Ok(true);
        }
        Ok(false)
    }

    fn setpoint(&self, id: AgentId, now: f64) -> Result<Setpoint, WatcherError> {
        if id.is_uav() {
            match self.pairing.phase(id.index) {
                Some(PairPhase::Landing) | Some(PairPhase::Landed) => {
                    let g = self.ugv_body(id.partner())?;
                    let rate = match self.motion2(id.partner(), now, false) {
                        Motion::Known(v) => v.with_z(0.0),
                        Motion::WorstCase { .. } => Vec3::ZERO,
                    };
                    let target = g.position().with_z(self.params.z_platform + self.params.gamma);
                    return Ok(Setpoint { position: target, rate });
                }
                _ => {}
            }
        }
        let (position, rate) = match self.tasks.get(&id) {
            Some(path) => path.sample(now),
            None => {
                let pose = self.tracked.get(&id).map(|t| t.pose).ok_or(WatcherError::MissingPose(id))?;
                let p = match pose {
                    AgentPose::Uav(p) => p,
                    AgentPose::Ugv { body } => nid_offset(&body).with_z(0.0),
                };
                (p, Vec3::ZERO)
            }
        };
        Ok(Setpoint { position, rate })
    }

    /// One Watcher tick after localization has been ingested: proximity,
    /// touchdown detection, matrix assembly and the outgoing messages.
    pub fn tick(&mut self, now: f64) -> Result<Vec<(NodeId, Payload)>, WatcherError> {
        for pair in 0..self.pairing.len() as u32 {
            self.detect_touchdown(pair, now)?;
        }
        self.update_proximity();
        let mut out = std::mem::take(&mut self.pending);
        let agents: Vec<AgentId> = self.agents().collect();
        for id in agents {
            let Some(tracked) = self.tracked.get(&id) else { continue };
            let pose = tracked.pose.as_pose();
            let matrix = self.assemble_constraints(id, now)?;
            let setpoint = self.setpoint(id, now)?;
            self.records.push(WatcherRecord::Matrix {
                t: now,
                agent: id,
                rows: matrix.active_count(),
                kinds: matrix.kinds(),
                proximal: self.proximal_of(id).into_iter().collect(),
            });
            let dst = NodeId::Agent(id);
            out.push((dst, Payload::PoseUpdate(pose)));
            out.push((dst, Payload::SetpointUpdate(setpoint)));
            out.push((dst, Payload::ConstraintMatrixUpdate(matrix)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_on_constant_velocity() {
        let history: Vec<(f64, Vec3)> = (0..5).map(|k| (k as f64 * 0.05, Vec3::new(k as f64 * 0.05, 0.0, 0.0))).collect();
        let est = estimate_velocity(&history, 0.7, 0.2, 0.2);
        assert!((est.v - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
        assert_eq!(est.quality, EstimateQuality::Smoothed);
    }

    #[test]
    fn estimator_static_and_stale() {
        let history: Vec<(f64, Vec3)> = (0..4).map(|k| (k as f64 * 0.05, Vec3::new(1.0, 2.0, 3.0))).collect();
        assert_eq!(estimate_velocity(&history, 0.7, 0.2, 0.15).v, Vec3::ZERO);
        let stale = estimate_velocity(&history, 0.7, 0.2, 0.5);
        assert_eq!(stale.quality, EstimateQuality::WorstCase);
        let single = estimate_velocity(&history[..1], 0.7, 0.2, 0.0);
        assert_eq!((single.v, single.quality), (Vec3::ZERO, EstimateQuality::WorstCase));
    }

    #[test]
    fn estimator_smoothing_weights() {
        let mut e = VelocityEstimator::new(0.7, 1.0);
        e.update(0.0, Vec3::ZERO);
        e.update(1.0, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(e.estimate(1.0).quality, EstimateQuality::Fresh);
        e.update(2.0, Vec3::new(3.0, 0.0, 0.0));
        // 0.7 * 2 + 0.3 * 1
        assert!((e.estimate(2.0).v.x - 1.7).abs() < 1e-12);
    }

    #[test]
    fn hysteresis_threshold() {
        assert!(is_proximal(1.0 - 1e-9, 1.0, 0.1, false));
        assert!(!is_proximal(1.0, 1.0, 0.1, false));
        assert!(is_proximal(1.05, 1.0, 0.1, true));
        assert!(!is_proximal(1.1, 1.0, 0.1, true));
    }

    #[test]
    fn matrix_push_and_padding() {
        let mut m = ConstraintMatrix::zeros(AgentId::uav(0), 0.0, 2, 3);
        let row = ConstraintRow { a: vec![1.0, 2.0, 3.0], b: 4.0, kind: RowKind::Aa, other_id: None, h_value: 1.0 };
        m.push(&row).unwrap();
        assert!(m.padding_is_zero());
        assert_eq!(m.active_rows(), vec![row.clone()]);
        m.push(&row).unwrap();
        assert!(matches!(m.push(&row), Err(WatcherError::CapacityExceeded { needed: 3, capacity: 2, .. })));
    }
}
