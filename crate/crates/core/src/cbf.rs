//! Barrier functions for the four interaction families and the task-space box,
//! and their linearization into constraint rows on the velocity input.
//!
//! Every barrier `h` is evaluated together with its gradient with respect to
//! the controlled agent's own position and its explicit time derivative, which
//! comes from the motion of the *other* body. Under single-integrator
//! kinematics the barrier condition becomes the affine inequality
//!
//! ```text
//! a . u >= -b,   a = dh/dp,   b = kappa * h + dh/dt
//! ```
//!
//! with a linear class-K function `xi(h) = kappa * h`.

use serde::{Deserialize, Serialize};

use crate::geometry::{Vec2, Vec3};
use crate::ids::AgentId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CbfError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("{0} row needs a velocity estimate of the other body")]
    MissingVelocity(RowKind),
}

/// Axis-aligned task space, `[lo, hi]` per axis, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Bounds {
    pub fn is_well_ordered(&self) -> bool {
        self.x[0] < self.x[1] && self.y[0] < self.y[1] && self.z[0] < self.z[1]
    }

    /// Squared diagonal of the horizontal footprint.
    pub fn horizontal_diag_sq(&self) -> f64 {
        let dx = self.x[1] - self.x[0];
        let dy = self.y[1] - self.y[0];
        dx * dx + dy * dy
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self { x: [-5.0, 5.0], y: [-5.0, 5.0], z: [0.0, 3.0] }
    }
}

/// Safety radii, landing-funnel shape, class-K gain, task space and
/// admissible input bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// UAV-UAV safety radius (m).
    pub s_a: f64,
    /// UAV-other-UGV safety radius (m).
    pub s_ag: f64,
    /// UGV-UGV safety radius on offset points (m).
    pub s_g: f64,
    /// Horizontal funnel scale (1/m^2).
    pub alpha: f64,
    /// Vertical funnel scale (m).
    pub beta: f64,
    /// Funnel offset above the platform (m).
    pub gamma: f64,
    /// Class-K gain (1/s).
    pub kappa: f64,
    pub bounds: Bounds,
    /// Per-axis UAV speed bound (m/s).
    pub v_bar: f64,
    /// Per-axis UGV offset-point speed bound (m/s).
    pub v_g: f64,
    /// UGV turn-rate bound (rad/s).
    pub omega_bar: f64,
    /// Height of the landing platforms in the inertial frame (m).
    pub z_platform: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            s_a: 0.5,
            s_ag: 0.7,
            s_g: 1.0,
            alpha: 2.0,
            beta: 0.5,
            gamma: 0.1,
            kappa: 1.0,
            bounds: Bounds::default(),
            v_bar: 1.0,
            v_g: 0.6,
            omega_bar: 2.0,
            z_platform: 0.0,
        }
    }
}

impl SafetyParams {
    /// Platform point of a UGV body position.
    pub fn platform(&self, ugv: Vec2) -> Vec3 {
        ugv.with_z(self.z_platform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    #[serde(rename = "AA")]
    Aa,
    #[serde(rename = "GG")]
    Gg,
    #[serde(rename = "AGO")]
    Ago,
    #[serde(rename = "AGC")]
    Agc,
    #[serde(rename = "BOX")]
    Box,
}

impl RowKind {
    pub const ALL: [RowKind; 5] = [RowKind::Aa, RowKind::Gg, RowKind::Ago, RowKind::Agc, RowKind::Box];

    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Aa => "AA",
            RowKind::Gg => "GG",
            RowKind::Ago => "AGO",
            RowKind::Agc => "AGC",
            RowKind::Box => "BOX",
        }
    }
}

impl std::fmt::Display for RowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One linearized barrier condition `a . u >= -b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub kind: RowKind,
    pub other_id: Option<AgentId>,
    pub h_value: f64,
}

impl ConstraintRow {
    /// Residual `a . u + b`; nonnegative when the row is satisfied.
    pub fn residual(&self, u: &[f64]) -> f64 {
        self.a.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() + self.b
    }

    /// The explicit time-derivative part of `b`.
    pub fn time_term(&self, kappa: f64) -> f64 {
        self.b - kappa * self.h_value
    }
}

/// Motion of the other body entering the time derivative of a barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion<V> {
    /// Velocity estimate in the inertial frame.
    Known(V),
    /// Only a speed bound is trusted; the time term takes its worst case.
    WorstCase { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxFace {
    XMax,
    XMin,
    YMax,
    YMin,
    ZMax,
}

impl BoxFace {
    pub const UAV: [BoxFace; 5] = [BoxFace::XMax, BoxFace::XMin, BoxFace::YMax, BoxFace::YMin, BoxFace::ZMax];
    pub const UGV: [BoxFace; 4] = [BoxFace::XMax, BoxFace::XMin, BoxFace::YMax, BoxFace::YMin];

    fn axis_sign(self) -> (usize, f64) {
        match self {
            BoxFace::XMax => (0, -1.0),
            BoxFace::XMin => (0, 1.0),
            BoxFace::YMax => (1, -1.0),
            BoxFace::YMin => (1, 1.0),
            BoxFace::ZMax => (2, -1.0),
        }
    }

    /// Signed unit gradient in a space of dimension `dim`.
    pub fn gradient(self, dim: usize) -> Vec<f64> {
        let (axis, sign) = self.axis_sign();
        let mut g = vec![0.0; dim];
        g[axis] = sign;
        g
    }

    fn value(self, coords: &[f64], bounds: &Bounds) -> f64 {
        match self {
            BoxFace::XMax => bounds.x[1] - coords[0],
            BoxFace::XMin => coords[0] - bounds.x[0],
            BoxFace::YMax => bounds.y[1] - coords[1],
            BoxFace::YMin => coords[1] - bounds.y[0],
            BoxFace::ZMax => bounds.z[1] - coords[2],
        }
    }
}

/// Point constrained by the box: a UAV position or a UGV offset point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxPoint {
    Uav(Vec3),
    Ugv(Vec2),
}

impl BoxPoint {
    fn coords(&self) -> Vec<f64> {
        match self {
            BoxPoint::Uav(p) => p.to_array().to_vec(),
            BoxPoint::Ugv(p) => p.to_array().to_vec(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            BoxPoint::Uav(p) => p.is_finite(),
            BoxPoint::Ugv(p) => p.is_finite(),
        }
    }

    fn faces(&self) -> &'static [BoxFace] {
        match self {
            BoxPoint::Uav(_) => &BoxFace::UAV,
            BoxPoint::Ugv(_) => &BoxFace::UGV,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxValue {
    pub face: BoxFace,
    pub h: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandingEval {
    pub h: f64,
    /// Squared horizontal distance to the platform.
    pub l: f64,
    /// Radial slope factor of the funnel gradient.
    pub k: f64,
}

fn finite(ok: bool, what: &'static str) -> Result<(), CbfError> {
    if ok {
        Ok(())
    } else {
        Err(CbfError::NonFinite(what))
    }
}

/// UAV-UAV barrier `|p_i - p_j|^2 - s_a^2`.
pub fn eval_aa(p_i: Vec3, p_j: Vec3, s_a: f64) -> Result<f64, CbfError> {
    finite(p_i.is_finite() && p_j.is_finite() && s_a.is_finite(), "eval_aa")?;
    Ok((p_i - p_j).norm_sq() - s_a * s_a)
}

/// UGV-UGV barrier on offset points `|rho_i - rho_j|^2 - s_g^2`.
pub fn eval_gg(rho_i: Vec2, rho_j: Vec2, s_g: f64) -> Result<f64, CbfError> {
    finite(rho_i.is_finite() && rho_j.is_finite() && s_g.is_finite(), "eval_gg")?;
    Ok((rho_i - rho_j).norm_sq() - s_g * s_g)
}

/// UAV vs. another pair's UGV, with the UGV embedded at platform height.
pub fn eval_ago(p_a: Vec3, p_g: Vec3, s_ag: f64) -> Result<f64, CbfError> {
    finite(p_a.is_finite() && p_g.is_finite() && s_ag.is_finite(), "eval_ago")?;
    Ok((p_a - p_g).norm_sq() - s_ag * s_ag)
}

/// Height of the landing funnel surface above the platform at squared
/// horizontal distance `l`.
pub fn funnel_height(l: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    beta * alpha * l * (-alpha * l).exp() + gamma
}

/// Landing barrier of a UAV over its own UGV's platform point.
pub fn eval_landing(p_a: Vec3, p_g: Vec3, alpha: f64, beta: f64, gamma: f64) -> Result<LandingEval, CbfError> {
    finite(
        p_a.is_finite() && p_g.is_finite() && alpha.is_finite() && beta.is_finite() && gamma.is_finite(),
        "eval_landing",
    )?;
    let r = p_a - p_g;
    let l = r.x * r.x + r.y * r.y;
    let e = (-alpha * l).exp();
    let h = r.z - beta * alpha * l * e - gamma;
    let k = 2.0 * beta * alpha * (alpha * l - 1.0) * e;
    Ok(LandingEval { h, l, k })
}

/// Spatial gradient of the landing barrier, `(k r_x, k r_y, 1)`.
pub fn landing_gradient(r: Vec3, k: f64) -> Vec3 {
    Vec3::new(k * r.x, k * r.y, 1.0)
}

/// Explicit time derivative of the landing barrier caused by the UGV's
/// horizontal motion.
pub fn landing_time_term(r: Vec3, k: f64, ugv_vel: Vec2) -> f64 {
    -k * (r.x * ugv_vel.x + r.y * ugv_vel.y)
}

/// Box barriers: five faces for a UAV (no floor), four for a UGV offset point.
pub fn eval_box(point: BoxPoint, bounds: &Bounds) -> Vec<BoxValue> {
    let coords = point.coords();
    point
        .faces()
        .iter()
        .map(|&face| BoxValue { face, h: face.value(&coords, bounds), gradient: face.gradient(coords.len()) })
        .collect()
}

/// Inputs for one constraint row, by family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowSpec {
    Aa { own: Vec3, other: Vec3, other_motion: Option<Motion<Vec3>>, other_id: Option<AgentId> },
    Gg { own: Vec2, other: Vec2, other_motion: Option<Motion<Vec2>>, other_id: Option<AgentId> },
    /// `ugv` is the other UGV's body position.
    Ago { own: Vec3, ugv: Vec2, ugv_motion: Option<Motion<Vec2>>, other_id: Option<AgentId> },
    /// `ugv` is the paired UGV's body position.
    Agc { own: Vec3, ugv: Vec2, ugv_motion: Option<Motion<Vec2>>, other_id: Option<AgentId> },
    Box { point: BoxPoint, face: BoxFace },
}

impl RowSpec {
    pub fn kind(&self) -> RowKind {
        match self {
            RowSpec::Aa { .. } => RowKind::Aa,
            RowSpec::Gg { .. } => RowKind::Gg,
            RowSpec::Ago { .. } => RowKind::Ago,
            RowSpec::Agc { .. } => RowKind::Agc,
            RowSpec::Box { .. } => RowKind::Box,
        }
    }
}

fn require<V>(m: Option<Motion<V>>, kind: RowKind) -> Result<Motion<V>, CbfError> {
    m.ok_or(CbfError::MissingVelocity(kind))
}

fn motion_finite3(m: &Motion<Vec3>) -> bool {
    match m {
        Motion::Known(v) => v.is_finite(),
        Motion::WorstCase { speed } => speed.is_finite(),
    }
}

fn motion_finite2(m: &Motion<Vec2>) -> bool {
    match m {
        Motion::Known(v) => v.is_finite(),
        Motion::WorstCase { speed } => speed.is_finite(),
    }
}

/// Linearize one barrier into `a . u >= -b` for the agent that owns `own`.
pub fn build_constraint_row(spec: RowSpec, params: &SafetyParams) -> Result<ConstraintRow, CbfError> {
    let kappa = params.kappa;
    let kind = spec.kind();
    let (a, h, dh_dt, other_id) = match spec {
        RowSpec::Aa { own, other, other_motion, other_id } => {
            let m = require(other_motion, kind)?;
            finite(motion_finite3(&m), "build_constraint_row")?;
            let h = eval_aa(own, other, params.s_a)?;
            let r = own - other;
            let dt = match m {
                Motion::Known(v) => -2.0 * r.dot(v),
                Motion::WorstCase { speed } => -2.0 * r.norm() * speed,
            };
            ((2.0 * r).to_array().to_vec(), h, dt, other_id)
        }
        RowSpec::Gg { own, other, other_motion, other_id } => {
            let m = require(other_motion, kind)?;
            finite(motion_finite2(&m), "build_constraint_row")?;
            let h = eval_gg(own, other, params.s_g)?;
            let r = own - other;
            let dt = match m {
                Motion::Known(v) => -2.0 * r.dot(v),
                Motion::WorstCase { speed } => -2.0 * r.norm() * speed,
            };
            ((2.0 * r).to_array().to_vec(), h, dt, other_id)
        }
        RowSpec::Ago { own, ugv, ugv_motion, other_id } => {
            let m = require(ugv_motion, kind)?;
            finite(motion_finite2(&m), "build_constraint_row")?;
            let g = params.platform(ugv);
            let h = eval_ago(own, g, params.s_ag)?;
            let r = own - g;
            let dt = match m {
                Motion::Known(v) => -2.0 * r.xy().dot(v),
                Motion::WorstCase { speed } => -2.0 * r.xy().norm() * speed,
            };
            ((2.0 * r).to_array().to_vec(), h, dt, other_id)
        }
        RowSpec::Agc { own, ugv, ugv_motion, other_id } => {
            let m = require(ugv_motion, kind)?;
            finite(motion_finite2(&m), "build_constraint_row")?;
            let g = params.platform(ugv);
            let ev = eval_landing(own, g, params.alpha, params.beta, params.gamma)?;
            let r = own - g;
            let dt = match m {
                Motion::Known(v) => landing_time_term(r, ev.k, v),
                Motion::WorstCase { speed } => -ev.k.abs() * r.xy().norm() * speed,
            };
            (landing_gradient(r, ev.k).to_array().to_vec(), ev.h, dt, other_id)
        }
        RowSpec::Box { point, face } => {
            finite(point.is_finite(), "build_constraint_row")?;
            let coords = point.coords();
            (face.gradient(coords.len()), face.value(&coords, &params.bounds), 0.0, None)
        }
    };
    Ok(ConstraintRow { a, b: kappa * h + dh_dt, kind, other_id, h_value: h })
}

/// Numerical check of the barrier validity condition over the admissible box
/// `[-bound, bound]^n`: the best achievable `a . u` plus `b` must be
/// nonnegative.
pub fn verify_validity(row: &ConstraintRow, admissible_bound: f64) -> bool {
    let l1: f64 = row.a.iter().map(|a| a.abs()).sum();
    admissible_bound * l1 + row.b >= 0.0
}
