//! Scenario files: TOML schema, defaults and validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::GainMatrix;
use crate::cbf::{eval_landing, SafetyParams};
use crate::geometry::{Vec2, Vec3};
use crate::netsim::{LinkModel, Outage};
use crate::task::WaypointTask;
use crate::watcher::TouchdownConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Parse,
    RadiusOrder,
    Spawn,
    Speed,
    Capacity,
    Antipodal,
    Param,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Parse => "PARSE",
            ErrorCode::RadiusOrder => "RADIUS_ORDER",
            ErrorCode::Spawn => "SPAWN",
            ErrorCode::Speed => "SPEED",
            ErrorCode::Capacity => "CAPACITY",
            ErrorCode::Antipodal => "ANTIPODAL",
            ErrorCode::Param => "PARAM",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ErrorCode,
    pub message: String,
}

/// Every problem found in a config, not just the first.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl ConfigError {
    fn single(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { violations: vec![Violation { code, message: message.into() }] }
    }

    pub fn codes(&self) -> Vec<ErrorCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    pub fn has(&self, code: ErrorCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.code, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub position: Vec3,
    #[serde(default)]
    pub task: WaypointTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UgvSpec {
    /// `[x, y, theta]` of the body.
    pub pose: [f64; 3],
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_wheel_base")]
    pub wheel_base: f64,
    /// Waypoints for the offset point; `z` is ignored.
    #[serde(default)]
    pub task: WaypointTask,
}

fn default_offset() -> f64 {
    0.1
}

fn default_wheel_base() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub uav: UavSpec,
    pub ugv: UgvSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandingEvent {
    pub time: f64,
    pub pair: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub uav: GainMatrix,
    pub ugv: GainMatrix,
}

impl Default for Gains {
    fn default() -> Self {
        Self { uav: GainMatrix::identity(3), ugv: GainMatrix::identity(2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub base_latency: f64,
    pub jitter: f64,
    pub drop_prob: f64,
    pub outages: Vec<Outage>,
}

impl NetworkConfig {
    pub fn link(&self) -> LinkModel {
        LinkModel { base_latency: self.base_latency, jitter: self.jitter, drop_prob: self.drop_prob }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Standard deviation of Gaussian position noise (m); heading is exact.
    pub noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub smoothing: f64,
    pub stale_after: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { smoothing: 0.7, stale_after: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatcherSection {
    /// Activation margin override (m). Defaults to the worst-case closing
    /// distance over one Watcher period plus the largest link latency, + 0.5 m.
    pub margin: Option<f64>,
    pub hysteresis: f64,
    /// Worst-case time terms instead of velocity estimates.
    pub conservative: bool,
    pub gate_by_proximity: bool,
}

impl Default for WatcherSection {
    fn default() -> Self {
        Self { margin: None, hysteresis: 0.1, conservative: false, gate_by_proximity: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default = "default_watcher_rate")]
    pub watcher_rate: f64,
    /// Rows per constraint matrix; defaults to `2N + 4`.
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(default = "default_hold_timeout")]
    pub hold_timeout: f64,
    /// Agent-side half-share bound on UAV-UAV and UGV-UGV rows.
    #[serde(default = "default_true")]
    pub reciprocal: bool,
    /// Shift every waypoint by a deterministic 1 mm to break exact symmetry.
    #[serde(default)]
    pub perturb_setpoints: bool,
    #[serde(default)]
    pub safety: SafetyParams,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub watcher: WatcherSection,
    #[serde(default)]
    pub touchdown: TouchdownConfig,
    pub pairs: Vec<PairSpec>,
    #[serde(default)]
    pub landing: Vec<LandingEvent>,
}

fn default_dt() -> f64 {
    0.01
}

fn default_control_rate() -> f64 {
    50.0
}

fn default_watcher_rate() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

fn default_hold_timeout() -> f64 {
    0.25
}

/// Size of the perturbation applied with `perturb_setpoints`.
pub const SETPOINT_PERTURBATION: f64 = 1e-3;

impl ScenarioConfig {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity.unwrap_or(2 * self.n_pairs() + 4)
    }

    pub fn control_every(&self) -> u64 {
        ((1.0 / (self.control_rate * self.dt)).round() as u64).max(1)
    }

    pub fn watcher_every(&self) -> u64 {
        ((1.0 / (self.watcher_rate * self.dt)).round() as u64).max(1)
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round().max(0.0) as u64
    }

    pub fn activation_margin(&self) -> f64 {
        self.watcher.margin.unwrap_or_else(|| {
            crate::watcher::WatcherConfig::default_margin(
                self.safety.v_bar,
                1.0 / self.watcher_rate,
                self.network.link().max_latency(),
            )
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parse and validate a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| ConfigError::single(ErrorCode::Parse, e.to_string().trim_end()))?;
    validate(&config)?;
    Ok(config)
}

fn ugv_offset_point(u: &UgvSpec) -> Vec2 {
    let [x, y, th] = u.pose;
    Vec2::new(x + u.offset * th.cos(), y + u.offset * th.sin())
}

fn strictly_inside(v: f64, range: [f64; 2]) -> bool {
    v > range[0] && v < range[1]
}

fn finite_all(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Direction of the first leg of a task, if any.
fn first_leg(start: Vec3, task: &WaypointTask) -> Option<Vec3> {
    task.waypoints.first().map(|w| *w - start).filter(|d| d.norm() > 0.0)
}

/// Two agents heading straight at each other along the same line.
fn antipodal(pa: Vec3, da: Vec3, pb: Vec3, db: Vec3) -> bool {
    let cross = |a: Vec3, b: Vec3| Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x);
    let sep = pb - pa;
    let eps = 1e-9;
    cross(da, db).norm() <= eps * da.norm() * db.norm()
        && cross(da, sep).norm() <= eps * da.norm() * sep.norm()
        && da.dot(db) < 0.0
        && da.dot(sep) > 0.0
}

/// Check every config invariant, collecting all violations.
pub fn validate(c: &ScenarioConfig) -> Result<(), ConfigError> {
    let mut v: Vec<Violation> = Vec::new();
    let mut push = |code: ErrorCode, message: String| v.push(Violation { code, message });
    let s = &c.safety;
    let b = &s.bounds;

    if !(s.s_a > 0.0 && s.s_g > s.s_ag && s.s_ag > s.s_a) {
        push(
            ErrorCode::RadiusOrder,
            format!("safety radii must satisfy s_g > s_ag > s_a > 0, got s_g={} s_ag={} s_a={}", s.s_g, s.s_ag, s.s_a),
        );
    }

    let scalars = [
        ("duration", c.duration, true),
        ("dt", c.dt, false),
        ("control_rate", c.control_rate, false),
        ("watcher_rate", c.watcher_rate, false),
        ("hold_timeout", c.hold_timeout, false),
        ("safety.alpha", s.alpha, false),
        ("safety.beta", s.beta, false),
        ("safety.gamma", s.gamma, false),
        ("safety.kappa", s.kappa, false),
        ("safety.v_bar", s.v_bar, false),
        ("safety.v_g", s.v_g, false),
        ("safety.omega_bar", s.omega_bar, false),
        ("touchdown.l_touch", c.touchdown.l_touch, false),
        ("touchdown.dz", c.touchdown.dz, false),
        ("touchdown.hold", c.touchdown.hold, true),
        ("estimator.stale_after", c.estimator.stale_after, false),
        ("watcher.hysteresis", c.watcher.hysteresis, true),
        ("network.base_latency", c.network.base_latency, true),
        ("network.jitter", c.network.jitter, true),
        ("localization.noise_std", c.localization.noise_std, true),
    ];
    for (name, value, zero_ok) in scalars {
        let ok = value.is_finite() && (value > 0.0 || (zero_ok && value == 0.0));
        if !ok {
            push(ErrorCode::Param, format!("{name} must be {}, got {value}", if zero_ok { "non-negative" } else { "positive" }));
        }
    }
    if !(c.estimator.smoothing > 0.0 && c.estimator.smoothing <= 1.0) {
        push(ErrorCode::Param, format!("estimator.smoothing must be in (0, 1], got {}", c.estimator.smoothing));
    }
    if !(c.network.drop_prob >= 0.0 && c.network.drop_prob < 1.0) {
        push(
            ErrorCode::Param,
            format!(
                "network.drop_prob must be in [0, 1), got {}; model total loss with network.outages",
                c.network.drop_prob
            ),
        );
    }
    for o in &c.network.outages {
        if !(o.start.is_finite() && o.end.is_finite() && o.start <= o.end) {
            push(ErrorCode::Param, format!("outage [{}, {}) is not a valid interval", o.start, o.end));
        }
    }
    if let Some(m) = c.watcher.margin {
        if !(m.is_finite() && m >= 0.0) {
            push(ErrorCode::Param, format!("watcher.margin must be non-negative, got {m}"));
        }
    }
    if !b.is_well_ordered() {
        push(ErrorCode::Param, format!("bounds must satisfy min < max on every axis, got {b:?}"));
    }
    if !(s.z_platform.is_finite() && s.z_platform + s.gamma < b.z[1]) {
        push(ErrorCode::Param, format!("platform height {} plus gamma must lie below z max {}", s.z_platform, b.z[1]));
    }
    if c.dt > 0.0 && c.control_rate > 0.0 && c.watcher_rate > 0.0 {
        for (name, rate) in [("control_rate", c.control_rate), ("watcher_rate", c.watcher_rate)] {
            let k = 1.0 / (rate * c.dt);
            if k < 0.5 || (k - k.round()).abs() > 1e-6 {
                push(ErrorCode::Param, format!("{name} {rate} Hz is not an integer multiple of dt {}", c.dt));
            }
        }
    }
    // The landing funnel row stays valid at its most negative time-free value
    // only if the UAV can outrun kappa * beta / e.
    if s.v_bar < s.kappa * s.beta / std::f64::consts::E {
        push(ErrorCode::Param, format!("v_bar {} is below kappa*beta/e = {}", s.v_bar, s.kappa * s.beta / std::f64::consts::E));
    }
    if c.gains.uav.diag().len() != 3 {
        push(ErrorCode::Param, format!("gains.uav needs 3 entries, got {}", c.gains.uav.diag().len()));
    }
    if c.gains.ugv.diag().len() != 2 {
        push(ErrorCode::Param, format!("gains.ugv needs 2 entries, got {}", c.gains.ugv.diag().len()));
    }

    // Speed bounds.
    if !(2f64.sqrt() * s.v_g < s.v_bar) {
        push(
            ErrorCode::Speed,
            format!("UGV per-axis bound v_g={} allows body speed sqrt(2)*v_g >= v_bar={}", s.v_g, s.v_bar),
        );
    }
    for (i, p) in c.pairs.iter().enumerate() {
        if p.ugv.task.speed > s.v_g {
            push(ErrorCode::Speed, format!("pairs[{i}].ugv task speed {} exceeds v_g={}", p.ugv.task.speed, s.v_g));
        }
        if p.ugv.task.speed < 0.0 || p.uav.task.speed < 0.0 {
            push(ErrorCode::Speed, format!("pairs[{i}] task speeds must be non-negative"));
        }
        if p.uav.task.speed > s.v_bar {
            push(ErrorCode::Speed, format!("pairs[{i}].uav task speed {} exceeds v_bar={}", p.uav.task.speed, s.v_bar));
        }
        if !(p.ugv.offset > 0.0 && p.ugv.offset.is_finite()) || !(p.ugv.wheel_base > 0.0 && p.ugv.wheel_base.is_finite()) {
            push(ErrorCode::Param, format!("pairs[{i}].ugv offset and wheel_base must be positive"));
        }
    }

    // Capacity.
    let n = c.n_pairs();
    if n == 0 {
        push(ErrorCode::Param, "at least one pair is required".to_string());
    }
    if c.capacity() < 2 * n + 4 {
        push(ErrorCode::Capacity, format!("capacity {} is below 2N+4 = {} rows needed by a UAV", c.capacity(), 2 * n + 4));
    }

    // Spawn feasibility.
    let finite_states = c.pairs.iter().all(|p| finite_all(&p.uav.position.to_array()) && finite_all(&p.ugv.pose));
    if !finite_states {
        push(ErrorCode::Spawn, "initial states must be finite".to_string());
    } else {
        for (i, p) in c.pairs.iter().enumerate() {
            let q = p.uav.position;
            if !(strictly_inside(q.x, b.x) && strictly_inside(q.y, b.y) && strictly_inside(q.z, b.z)) {
                push(ErrorCode::Spawn, format!("uav{i} starts outside the task space"));
            }
            let rho = ugv_offset_point(&p.ugv);
            let [gx, gy, _] = p.ugv.pose;
            for (name, pt) in [("body", Vec2::new(gx, gy)), ("offset point", rho)] {
                if !(strictly_inside(pt.x, b.x) && strictly_inside(pt.y, b.y)) {
                    push(ErrorCode::Spawn, format!("ugv{i} {name} starts outside the task space"));
                }
            }
            let platform = s.platform(Vec2::new(gx, gy));
            if let Ok(ev) = eval_landing(q, platform, s.alpha, s.beta, s.gamma) {
                if !(ev.h > 0.0) {
                    push(ErrorCode::Spawn, format!("uav{i} starts inside its landing funnel (h = {})", ev.h));
                }
            }
            for (j, other) in c.pairs.iter().enumerate().skip(i + 1) {
                let d = (q - other.uav.position).norm();
                if !(d > s.s_a) {
                    push(ErrorCode::Spawn, format!("uav{i} and uav{j} start {d} apart, need more than s_a={}", s.s_a));
                }
                let [hx, hy, _] = other.ugv.pose;
                let need = s.s_g + p.ugv.offset + other.ugv.offset;
                let d = Vec2::new(gx - hx, gy - hy).norm();
                if !(d > need) {
                    push(ErrorCode::Spawn, format!("ugv{i} and ugv{j} start {d} apart, need more than s_g+o_i+o_j={need}"));
                }
            }
            for (j, other) in c.pairs.iter().enumerate() {
                if i == j {
                    continue;
                }
                let [hx, hy, _] = other.ugv.pose;
                let d = (q - s.platform(Vec2::new(hx, hy))).norm();
                if !(d > s.s_ag) {
                    push(ErrorCode::Spawn, format!("uav{i} starts {d} from ugv{j}, need more than s_ag={}", s.s_ag));
                }
            }
        }
    }

    // Exactly antipodal crossings stall a projection filter at a symmetric
    // equilibrium; they are accepted only with the perturbation enabled.
    if !c.perturb_setpoints {
        let legs: Vec<(String, Vec3, Option<Vec3>)> = c
            .pairs
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                let g = ugv_offset_point(&p.ugv).with_z(0.0);
                let flat = WaypointTask {
                    waypoints: p.ugv.task.waypoints.iter().map(|w| w.xy().with_z(0.0)).collect(),
                    ..p.ugv.task.clone()
                };
                [
                    (format!("uav{i}"), p.uav.position, first_leg(p.uav.position, &p.uav.task)),
                    (format!("ugv{i}"), g, first_leg(g, &flat)),
                ]
            })
            .collect();
        for (a, (na, pa, da)) in legs.iter().enumerate() {
            for (nb, pb, db) in legs.iter().skip(a + 1) {
                if na[..3] != nb[..3] {
                    continue;
                }
                if let (Some(da), Some(db)) = (da, db) {
                    if antipodal(*pa, *da, *pb, *db) {
                        push(
                            ErrorCode::Antipodal,
                            format!("{na} and {nb} head straight at each other; set perturb_setpoints = true"),
                        );
                    }
                }
            }
        }
    }

    for e in &c.landing {
        if !(e.time.is_finite() && e.time >= 0.0) {
            push(ErrorCode::Param, format!("landing event time {} must be non-negative", e.time));
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { violations: v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
duration = 5.0

[[pairs]]
uav = { position = [0.0, 0.0, 1.0] }
ugv = { pose = [2.0, 0.0, 0.0] }

[[pairs]]
uav = { position = [-2.0, 2.0, 1.0] }
ugv = { pose = [-2.0, -2.0, 0.0] }
"#;

    #[test]
    fn defaults_accepted() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(c.n_pairs(), 2);
        assert_eq!(c.capacity(), 8);
        assert_eq!(c.control_every(), 2);
        assert_eq!(c.watcher_every(), 5);
        assert_eq!(c.steps(), 500);
        assert_eq!(c.safety, SafetyParams::default());
    }

    #[test]
    fn radius_order_rejected() {
        let text = format!("{BASE}\n[safety]\ns_a = 0.8\ns_ag = 0.7\n");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.codes(), vec![ErrorCode::RadiusOrder]);
    }

    #[test]
    fn capacity_one_short_rejected() {
        let text = format!("capacity = 7\n{BASE}");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.codes(), vec![ErrorCode::Capacity]);
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"
duration = 5.0
capacity = 3
[safety]
s_a = 0.8
[[pairs]]
uav = { position = [0.0, 0.0, 9.0] }
ugv = { pose = [0.0, 0.0, 0.0], task = { speed = 2.0 } }
"#;
        let err = parse_config(text).unwrap_err();
        for code in [ErrorCode::RadiusOrder, ErrorCode::Capacity, ErrorCode::Spawn, ErrorCode::Speed] {
            assert!(err.has(code), "missing {code} in {err}");
        }
    }

    #[test]
    fn parse_errors() {
        let err = parse_config("duration = [").unwrap_err();
        assert_eq!(err.codes(), vec![ErrorCode::Parse]);
        let err = parse_config("duration = 1.0\nbogus = 1\npairs = []").unwrap_err();
        assert_eq!(err.codes(), vec![ErrorCode::Parse]);
    }

    #[test]
    fn antipodal_needs_perturbation() {
        let text = r#"
duration = 5.0
[[pairs]]
uav = { position = [-2.0, 0.0, 1.0], task = { waypoints = [[2.0, 0.0, 1.0]], speed = 0.5 } }
ugv = { pose = [-3.0, -3.0, 0.0] }
[[pairs]]
uav = { position = [2.0, 0.0, 1.0], task = { waypoints = [[-2.0, 0.0, 1.0]], speed = 0.5 } }
ugv = { pose = [3.0, 3.0, 0.0] }
"#;
        assert_eq!(parse_config(text).unwrap_err().codes(), vec![ErrorCode::Antipodal]);
        let perturbed = format!("perturb_setpoints = true\n{text}");
        assert!(parse_config(&perturbed).is_ok());
    }

    #[test]
    fn full_drop_rejected() {
        let text = format!("{BASE}\n[network]\ndrop_prob = 1.0\n");
        assert_eq!(parse_config(&text).unwrap_err().codes(), vec![ErrorCode::Param]);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}
