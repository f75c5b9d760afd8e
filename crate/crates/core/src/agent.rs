//! Distributed control unit run on board each agent: nominal proportional
//! controller, near-identity diffeomorphism for the unicycle UGVs, the
//! safety filter, and the kinematic models used to integrate the plant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cbf::{ConstraintRow, RowKind};
use crate::geometry::{wrap_angle, Vec2, Vec3};
use crate::ids::{AgentId, AgentKind};
use crate::netsim::{Message, MsgType, Payload, Pose, Setpoint};
use crate::qp::{self, QpError, QpProblem, QpStatus};
use crate::watcher::ConstraintMatrix;

/// Positive diagonal gain matrix (1/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GainMatrix(Vec<f64>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("gain entries must be finite and positive: {0:?}")]
pub struct GainError(Vec<f64>);

impl GainMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self, GainError> {
        if diag.is_empty() || diag.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(GainError(diag));
        }
        Ok(Self(diag))
    }

    pub fn identity(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    pub fn diag(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<f64>> for GainMatrix {
    type Error = GainError;
    fn try_from(v: Vec<f64>) -> Result<Self, GainError> {
        GainMatrix::new(v)
    }
}

impl From<GainMatrix> for Vec<f64> {
    fn from(g: GainMatrix) -> Self {
        g.0
    }
}

/// `u' = -K (p - p_des) + p_des_dot`, clamped componentwise to `[-limit, limit]`.
pub fn nominal_velocity(current: &[f64], setpoint: &[f64], setpoint_rate: &[f64], gains: &GainMatrix, limit: f64) -> Vec<f64> {
    debug_assert_eq!(current.len(), setpoint.len());
    current
        .iter()
        .zip(setpoint)
        .zip(setpoint_rate)
        .zip(gains.diag())
        .map(|(((p, d), r), k)| (-k * (p - d) + r).clamp(-limit, limit))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavMode {
    Task,
    ReturnAndLand,
    Landed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub p: Vec3,
    pub mode: UavMode,
    pub paired_ugv: AgentId,
}

/// Planar unicycle pose plus the NID offset `o` and wheel half-base `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UgvState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub offset: f64,
    pub wheel_base: f64,
}

impl UgvState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Offset point `(x, y) + o (cos theta, sin theta)`.
pub fn nid_offset(state: &UgvState) -> Vec2 {
    let (s, c) = state.theta.sin_cos();
    Vec2::new(state.x + state.offset * c, state.y + state.offset * s)
}

/// Offset-point velocity produced by a body twist.
pub fn nid_forward(state: &UgvState, v: f64, omega: f64) -> Vec2 {
    let (s, c) = state.theta.sin_cos();
    let o = state.offset;
    Vec2::new(v * c - o * omega * s, v * s + o * omega * c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
    /// Uniform factor applied to the offset velocity to respect the turn-rate
    /// bound; 1 when no clamping happened.
    pub scale: f64,
}

/// Exact inverse of [`nid_forward`], without turn-rate limiting.
pub fn nid_inverse_unclamped(state: &UgvState, offset_vel: Vec2) -> (f64, f64) {
    let (s, c) = state.theta.sin_cos();
    let v = c * offset_vel.x + s * offset_vel.y;
    let omega = (-s * offset_vel.x + c * offset_vel.y) / state.offset;
    (v, omega)
}

/// Body twist for a commanded offset velocity. If `|omega|` would exceed
/// `omega_bar` the whole offset velocity is scaled down, which keeps the
/// commanded direction.
pub fn nid_inverse(state: &UgvState, offset_vel: Vec2, omega_bar: f64) -> Twist {
    let (v, omega) = nid_inverse_unclamped(state, offset_vel);
    if omega.abs() <= omega_bar {
        return Twist { v, omega, scale: 1.0 };
    }
    let scale = omega_bar / omega.abs();
    Twist { v: v * scale, omega: omega * scale, scale }
}

/// Wheel speeds `(R1, R2)` for a body twist; inverse of
/// `v = (R1 + R2) / 2`, `omega = (R1 - R2) / (2 L)`.
pub fn wheel_speeds(v: f64, omega: f64, wheel_base: f64) -> (f64, f64) {
    (v + wheel_base * omega, v - wheel_base * omega)
}

pub fn twist_from_wheels(r1: f64, r2: f64, wheel_base: f64) -> (f64, f64) {
    ((r1 + r2) / 2.0, (r1 - r2) / (2.0 * wheel_base))
}

/// Explicit Euler step of `p_dot = u`.
pub fn step_uav(state: &UavState, u: Vec3, dt: f64) -> UavState {
    UavState { p: state.p + u * dt, ..*state }
}

/// Explicit Euler step of the unicycle on flat ground.
pub fn step_ugv(state: &UgvState, v: f64, omega: f64, dt: f64) -> UgvState {
    let (s, c) = state.theta.sin_cos();
    UgvState {
        x: state.x + dt * v * c,
        y: state.y + dt * v * s,
        theta: wrap_angle(state.theta + dt * omega),
        ..*state
    }
}

/// Static configuration of one control unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitConfig {
    pub gains: GainMatrix,
    /// `v_bar` for UAVs, `v_g` for UGVs.
    pub box_limit: f64,
    pub omega_bar: f64,
    /// UGV only.
    pub offset: f64,
    /// UGV only.
    pub wheel_base: f64,
    pub hold_timeout: f64,
    /// Time a command stays applied; a tick holds if its data would outlive
    /// `hold_timeout` before the next tick.
    pub control_period: f64,
    /// Class-K gain used to carry stale rows forward.
    pub kappa: f64,
    /// Bound every agent-agent row by half the decay budget, `b <= kappa h / 2`,
    /// so two filtered agents stay safe whatever their velocity estimates.
    pub reciprocal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Hold,
    Uav { velocity: Vec3 },
    /// `offset_velocity` is the realised offset-point velocity after
    /// turn-rate scaling.
    Ugv { v: f64, omega: f64, wheels: (f64, f64), offset_velocity: Vec2 },
}

impl Command {
    pub fn is_zero(&self) -> bool {
        match *self {
            Command::Hold => true,
            Command::Uav { velocity } => velocity == Vec3::ZERO,
            Command::Ugv { v, omega, .. } => v == 0.0 && omega == 0.0,
        }
    }

    /// Logged input components: UAV velocity, or UGV offset velocity and turn rate.
    pub fn components(&self) -> [f64; 3] {
        match *self {
            Command::Hold => [0.0; 3],
            Command::Uav { velocity } => velocity.to_array(),
            Command::Ugv { omega, offset_velocity, .. } => [offset_velocity.x, offset_velocity.y, omega],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TickStatus {
    Optimal,
    Relaxed,
    Failed,
    /// No usable data, or data older than the hold timeout.
    Hold,
    Landed,
}

impl TickStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TickStatus::Optimal => "optimal",
            TickStatus::Relaxed => "relaxed",
            TickStatus::Failed => "failed",
            TickStatus::Hold => "hold",
            TickStatus::Landed => "landed",
        }
    }

    pub fn parse(s: &str) -> Option<TickStatus> {
        Some(match s {
            "optimal" => TickStatus::Optimal,
            "relaxed" => TickStatus::Relaxed,
            "failed" => TickStatus::Failed,
            "hold" => TickStatus::Hold,
            "landed" => TickStatus::Landed,
            _ => return None,
        })
    }
}

impl From<QpStatus> for TickStatus {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => TickStatus::Optimal,
            QpStatus::Relaxed => TickStatus::Relaxed,
            QpStatus::Failed => TickStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub status: TickStatus,
    pub stale: bool,
    pub nominal: Vec<f64>,
    /// Filtered input in the filter's own space (UAV velocity or UGV offset velocity).
    pub filtered: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
    pub max_violation: f64,
    /// Smallest barrier value among the rows the filter used.
    pub min_row_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: Command,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone, PartialEq)]
struct Stamped<T> {
    stamp: f64,
    value: T,
}

/// Exact unicycle motion under a constant twist for `tau` seconds.
pub fn unicycle_arc(state: &UgvState, v: f64, omega: f64, tau: f64) -> UgvState {
    let th = state.theta;
    let (dx, dy) = if (omega * tau).abs() < 1e-9 {
        (v * tau * th.cos(), v * tau * th.sin())
    } else {
        let th1 = th + omega * tau;
        (v / omega * (th1.sin() - th.sin()), -v / omega * (th1.cos() - th.cos()))
    };
    UgvState { x: state.x + dx, y: state.y + dy, theta: wrap_angle(th + omega * tau), ..*state }
}

/// One agent's control unit. Holds the newest pose, setpoint and constraint
/// matrix received from the Watcher and turns them into a command each tick.
///
/// Between Watcher updates the unit dead-reckons its own state from the
/// commands it applied, and carries each stale row forward to the current
/// instant with its first-order change `a . dq + dh/dt * dt`.
#[derive(Debug, Clone)]
pub struct ControlUnit {
    id: AgentId,
    config: UnitConfig,
    mode: UavMode,
    pose: Option<Stamped<Pose>>,
    setpoint: Option<Stamped<Setpoint>>,
    matrix: Option<ConstraintMatrix>,
    last_stamp: [f64; 5],
    /// Commands applied since the oldest stamp still in use, with start times.
    trail: VecDeque<(f64, Command)>,
}

impl ControlUnit {
    pub fn new(id: AgentId, config: UnitConfig) -> Self {
        Self {
            id,
            config,
            mode: UavMode::Task,
            pose: None,
            setpoint: None,
            matrix: None,
            last_stamp: [f64::NEG_INFINITY; 5],
            trail: VecDeque::new(),
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn mode(&self) -> UavMode {
        self.mode
    }

    pub fn matrix(&self) -> Option<&ConstraintMatrix> {
        self.matrix.as_ref()
    }

    /// Accept a message. Per message type only the newest send time is kept,
    /// so reordered deliveries never roll state back. Returns whether the
    /// message was used.
    pub fn receive(&mut self, msg: &Message) -> bool {
        let slot = msg.msg_type().index();
        if msg.send_time <= self.last_stamp[slot] {
            return false;
        }
        self.last_stamp[slot] = msg.send_time;
        match &msg.payload {
            Payload::PoseUpdate(p) => self.pose = Some(Stamped { stamp: msg.send_time, value: *p }),
            Payload::SetpointUpdate(s) => self.setpoint = Some(Stamped { stamp: msg.send_time, value: *s }),
            Payload::ConstraintMatrixUpdate(m) => self.matrix = Some(m.clone()),
            Payload::LandingSignal => {
                if self.id.is_uav() && self.mode == UavMode::Task {
                    self.mode = UavMode::ReturnAndLand;
                }
            }
            Payload::TouchdownAck => {
                if self.id.is_uav() {
                    self.mode = UavMode::Landed;
                }
            }
        }
        true
    }

    /// Pieces of the command trail overlapping `[from, to)`, as
    /// `(command, duration)`.
    fn applied(&self, from: f64, to: f64) -> impl Iterator<Item = (Command, f64)> + '_ {
        let ends = self.trail.iter().skip(1).map(|(t, _)| *t).chain(std::iter::once(f64::INFINITY));
        self.trail.iter().zip(ends).filter_map(move |(&(start, cmd), end)| {
            let tau = end.min(to) - start.max(from);
            (tau > 0.0).then_some((cmd, tau))
        })
    }

    /// Own pose at `now`, propagated from the last localization sample.
    fn own_pose(&self, pose: &Stamped<Pose>, now: f64) -> Pose {
        match pose.value {
            Pose::Uav(mut p) => {
                for (cmd, tau) in self.applied(pose.stamp, now) {
                    if let Command::Uav { velocity } = cmd {
                        p += velocity * tau;
                    }
                }
                Pose::Uav(p)
            }
            Pose::Ugv { x, y, theta } => {
                let mut s = UgvState { x, y, theta, offset: self.config.offset, wheel_base: self.config.wheel_base };
                for (cmd, tau) in self.applied(pose.stamp, now) {
                    if let Command::Ugv { v, omega, .. } = cmd {
                        s = unicycle_arc(&s, v, omega, tau);
                    }
                }
                Pose::Ugv { x: s.x, y: s.y, theta: s.theta }
            }
        }
    }

    /// Own displacement in filter coordinates over `[from, to)`.
    fn displacement(&self, from: f64, to: f64, dim: usize) -> Vec<f64> {
        let mut dq = vec![0.0; dim];
        for (cmd, tau) in self.applied(from, to) {
            for (d, c) in dq.iter_mut().zip(cmd.components()) {
                *d += c * tau;
            }
        }
        dq
    }

    /// Rows of the current matrix carried forward from its timestamp to `now`.
    fn current_rows(&self, matrix: &ConstraintMatrix, now: f64) -> Vec<ConstraintRow> {
        let dt = (now - matrix.timestamp).max(0.0);
        let dq = self.displacement(matrix.timestamp, now, matrix.dim());
        let kappa = self.config.kappa;
        matrix
            .active_rows()
            .into_iter()
            .map(|mut row| {
                let dh_dt = row.time_term(kappa);
                let moved: f64 = row.a.iter().zip(&dq).map(|(a, d)| a * d).sum();
                row.h_value += moved + dh_dt * dt;
                row.b = kappa * row.h_value + dh_dt;
                if self.config.reciprocal && matches!(row.kind, RowKind::Aa | RowKind::Gg) {
                    row.b = row.b.min(0.5 * kappa * row.h_value);
                }
                row
            })
            .collect()
    }

    fn hold(&self, stale: bool) -> ControlOutput {
        ControlOutput {
            command: Command::Hold,
            telemetry: Telemetry {
                status: if self.mode == UavMode::Landed { TickStatus::Landed } else { TickStatus::Hold },
                stale,
                nominal: vec![],
                filtered: vec![],
                rows: vec![],
                max_violation: 0.0,
                min_row_h: None,
            },
        }
    }

    fn record(&mut self, now: f64, out: ControlOutput) -> ControlOutput {
        self.trail.push_back((now, out.command));
        let oldest = [self.pose.as_ref().map(|p| p.stamp), self.matrix.as_ref().map(|m| m.timestamp)]
            .into_iter()
            .flatten()
            .fold(now, f64::min);
        while self.trail.len() > 1 && self.trail[1].0 <= oldest {
            self.trail.pop_front();
        }
        out
    }

    /// Run the nominal controller and safety filter once. The returned
    /// command is assumed applied until the next call.
    pub fn control_tick(&mut self, now: f64) -> Result<ControlOutput, QpError> {
        let out = self.compute(now)?;
        Ok(self.record(now, out))
    }

    fn compute(&self, now: f64) -> Result<ControlOutput, QpError> {
        if self.mode == UavMode::Landed {
            return Ok(self.hold(false));
        }
        let (Some(pose), Some(setpoint), Some(matrix)) = (&self.pose, &self.setpoint, &self.matrix) else {
            return Ok(self.hold(false));
        };
        let oldest = pose.stamp.min(setpoint.stamp).min(matrix.timestamp);
        if now + self.config.control_period - oldest > self.config.hold_timeout {
            return Ok(self.hold(true));
        }

        let ahead = now - setpoint.stamp;
        let target = setpoint.value.position + setpoint.value.rate * ahead;
        let rate = setpoint.value.rate;
        let rows = self.current_rows(matrix, now);
        let min_row_h = rows.iter().map(|r| r.h_value).reduce(f64::min);

        match (self.id.kind, self.own_pose(pose, now)) {
            (AgentKind::Uav, Pose::Uav(p)) => {
                let nominal = nominal_velocity(
                    &p.to_array(),
                    &target.to_array(),
                    &rate.to_array(),
                    &self.config.gains,
                    self.config.box_limit,
                );
                let problem = QpProblem::new(nominal.clone(), rows, self.config.box_limit);
                let sol = qp::solve_with_fallback(&problem)?;
                let velocity = Vec3::new(sol.u_star[0], sol.u_star[1], sol.u_star[2]);
                Ok(ControlOutput {
                    command: Command::Uav { velocity },
                    telemetry: Telemetry {
                        status: sol.status.into(),
                        stale: false,
                        nominal,
                        filtered: sol.u_star,
                        rows: problem.rows,
                        max_violation: sol.max_violation,
                        min_row_h,
                    },
                })
            }
            (AgentKind::Ugv, Pose::Ugv { x, y, theta }) => {
                let state = UgvState { x, y, theta, offset: self.config.offset, wheel_base: self.config.wheel_base };
                let rho = nid_offset(&state);
                let nominal = nominal_velocity(
                    &rho.to_array(),
                    &target.xy().to_array(),
                    &rate.xy().to_array(),
                    &self.config.gains,
                    self.config.box_limit,
                );
                let problem = QpProblem::new(nominal.clone(), rows, self.config.box_limit);
                let sol = qp::solve_with_fallback(&problem)?;
                let u = Vec2::new(sol.u_star[0], sol.u_star[1]);
                let twist = nid_inverse(&state, u, self.config.omega_bar);
                let wheels = wheel_speeds(twist.v, twist.omega, self.config.wheel_base);
                Ok(ControlOutput {
                    command: Command::Ugv { v: twist.v, omega: twist.omega, wheels, offset_velocity: u * twist.scale },
                    telemetry: Telemetry {
                        status: sol.status.into(),
                        stale: false,
                        nominal,
                        filtered: sol.u_star,
                        rows: problem.rows,
                        max_violation: sol.max_violation,
                        min_row_h,
                    },
                })
            }
            // A pose of the wrong kind is never addressed to this unit.
            _ => Ok(self.hold(false)),
        }
    }
}

impl MsgType {
    fn index(self) -> usize {
        match self {
            MsgType::PoseUpdate => 0,
            MsgType::SetpointUpdate => 1,
            MsgType::ConstraintMatrixUpdate => 2,
            MsgType::LandingSignal => 3,
            MsgType::TouchdownAck => 4,
        }
    }
}
