//! The deterministic virtual-time loop. Within one instant the order is:
//! network deliveries, Watcher tick (with a second delivery pass so
//! zero-latency traffic lands in the same instant), agent control ticks,
//! logging, then Euler integration of every plant.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{nid_offset, step_ugv, Command, ControlUnit, TickStatus, UavMode, UgvState, UnitConfig};
use crate::geometry::{Vec2, Vec3};
use crate::ids::{AgentId, NodeId};
use crate::netsim::{Network, Pose};
use crate::task::{SetpointPath, WaypointTask};
use crate::watcher::{Watcher, WatcherConfig, WatcherRecord};

use super::config::{ScenarioConfig, SETPOINT_PERTURBATION};
use super::log::{quantize, TrajectoryRow, TrajectoryWriter};
use super::summary::{summarize, AgentSample, BarrierContext, LinkEntry, MetricsSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Record every send, delivery and drop.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDump {
    pub agent: AgentId,
    pub position: Vec3,
    pub theta: f64,
    pub command: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDump {
    pub kind: String,
    pub other: Option<AgentId>,
    pub a: Vec<f64>,
    pub b: f64,
    pub h: f64,
}

/// State captured when a run stops early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortReport {
    pub t: f64,
    pub agent: Option<AgentId>,
    pub reason: String,
    pub nominal: Vec<f64>,
    pub filtered: Vec<f64>,
    pub rows: Vec<RowDump>,
    pub agents: Vec<AgentDump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: String,
    pub watcher_log: String,
    pub trace: Option<String>,
    pub links: Vec<LinkEntry>,
    pub summary: MetricsSummary,
    pub abort: Option<AbortReport>,
}

fn golden_direction(k: usize) -> Vec3 {
    let a = k as f64 * 2.399_963_229_728_653;
    Vec3::new(a.cos(), a.sin(), 0.0)
}

fn perturbed(task: &WaypointTask, shift: Vec3) -> WaypointTask {
    WaypointTask { waypoints: task.waypoints.iter().map(|w| *w + shift).collect(), ..task.clone() }
}

/// One scenario in progress. [`run`] drives it to completion; examples and
/// tests can also step it by hand.
pub struct Simulation {
    config: ScenarioConfig,
    ctx: BarrierContext,
    step: u64,
    uavs: Vec<Vec3>,
    ugvs: Vec<UgvState>,
    watcher: Watcher,
    network: Network,
    units: BTreeMap<AgentId, ControlUnit>,
    commands: BTreeMap<AgentId, Command>,
    landing_sent: Vec<bool>,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    trajectory: TrajectoryWriter,
    watcher_log: String,
    abort: Option<AbortReport>,
}

impl Simulation {
    /// `config` is assumed validated.
    pub fn new(config: &ScenarioConfig, options: RunOptions) -> Self {
        let n = config.n_pairs();
        let params = config.safety;
        let uavs: Vec<Vec3> = config.pairs.iter().map(|p| p.uav.position).collect();
        let ugvs: Vec<UgvState> = config
            .pairs
            .iter()
            .map(|p| {
                let [x, y, theta] = p.ugv.pose;
                UgvState { x, y, theta, offset: p.ugv.offset, wheel_base: p.ugv.wheel_base }
            })
            .collect();

        let mut tasks = BTreeMap::new();
        for (i, p) in config.pairs.iter().enumerate() {
            let (shift_a, shift_g) = if config.perturb_setpoints {
                (golden_direction(2 * i) * SETPOINT_PERTURBATION, golden_direction(2 * i + 1) * SETPOINT_PERTURBATION)
            } else {
                (Vec3::ZERO, Vec3::ZERO)
            };
            let uav_task = perturbed(&p.uav.task, shift_a);
            tasks.insert(AgentId::uav(i as u32), SetpointPath::new(p.uav.position, &uav_task));
            let flat = WaypointTask {
                waypoints: p.ugv.task.waypoints.iter().map(|w| w.xy().with_z(0.0)).collect(),
                ..p.ugv.task.clone()
            };
            let ugv_task = perturbed(&flat, shift_g);
            tasks.insert(AgentId::ugv(i as u32), SetpointPath::new(nid_offset(&ugvs[i]).with_z(0.0), &ugv_task));
        }

        let geometry = config
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (AgentId::ugv(i as u32), (p.ugv.offset, p.ugv.wheel_base)))
            .collect();
        let watcher_config = WatcherConfig {
            period: 1.0 / config.watcher_rate,
            margin: config.activation_margin(),
            hysteresis: config.watcher.hysteresis,
            smoothing: config.estimator.smoothing,
            stale_after: config.estimator.stale_after,
            touchdown: config.touchdown,
            capacity: config.capacity(),
            conservative: config.watcher.conservative,
            gate_by_proximity: config.watcher.gate_by_proximity,
        };
        let watcher = Watcher::new(params, watcher_config, n, geometry, tasks);

        let agent_ids: Vec<AgentId> =
            (0..n as u32).map(AgentId::uav).chain((0..n as u32).map(AgentId::ugv)).collect();
        let mut network =
            Network::new(config.network.link(), config.seed, agent_ids.iter().copied()).with_outages(config.network.outages.clone());
        if options.trace {
            network.enable_trace();
        }

        let mut units = BTreeMap::new();
        for &id in &agent_ids {
            let unit = if id.is_uav() {
                UnitConfig {
                    gains: config.gains.uav.clone(),
                    box_limit: params.v_bar,
                    omega_bar: params.omega_bar,
                    offset: 0.0,
                    wheel_base: 0.0,
                    hold_timeout: config.hold_timeout,
                    control_period: 1.0 / config.control_rate,
                    kappa: params.kappa,
                    reciprocal: config.reciprocal,
                }
            } else {
                let p = &config.pairs[id.index as usize].ugv;
                UnitConfig {
                    gains: config.gains.ugv.clone(),
                    box_limit: params.v_g,
                    omega_bar: params.omega_bar,
                    offset: p.offset,
                    wheel_base: p.wheel_base,
                    hold_timeout: config.hold_timeout,
                    control_period: 1.0 / config.control_rate,
                    kappa: params.kappa,
                    reciprocal: config.reciprocal,
                }
            };
            units.insert(id, ControlUnit::new(id, unit));
        }

        let noise = (config.localization.noise_std > 0.0).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            // Link streams use small codes; keep localization well clear of them.
            rng.set_stream(u64::MAX);
            (rng, Normal::new(0.0, config.localization.noise_std).expect("validated std"))
        });

        Self {
            config: config.clone(),
            ctx: BarrierContext::from_config(config),
            step: 0,
            uavs,
            ugvs,
            watcher,
            network,
            units,
            commands: agent_ids.iter().map(|id| (*id, Command::Hold)).collect(),
            landing_sent: vec![false; config.landing.len()],
            noise,
            trajectory: TrajectoryWriter::new(),
            watcher_log: String::new(),
            abort: None,
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn is_finished(&self) -> bool {
        self.abort.is_some() || self.step >= self.config.steps()
    }

    pub fn abort(&self) -> Option<&AbortReport> {
        self.abort.as_ref()
    }

    pub fn uav_position(&self, pair: usize) -> Vec3 {
        self.uavs[pair]
    }

    pub fn ugv_state(&self, pair: usize) -> UgvState {
        self.ugvs[pair]
    }

    pub fn watcher(&self) -> &Watcher {
        &self.watcher
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn unit(&self, id: AgentId) -> Option<&ControlUnit> {
        self.units.get(&id)
    }

    fn agent_ids(&self) -> Vec<AgentId> {
        self.units.keys().copied().collect()
    }

    fn true_pose(&self, id: AgentId) -> Pose {
        if id.is_uav() {
            Pose::Uav(self.uavs[id.index as usize])
        } else {
            let g = &self.ugvs[id.index as usize];
            Pose::Ugv { x: g.x, y: g.y, theta: g.theta }
        }
    }

    fn localize(&mut self, id: AgentId) -> Pose {
        let pose = self.true_pose(id);
        let Some((rng, normal)) = self.noise.as_mut() else { return pose };
        match pose {
            Pose::Uav(p) => Pose::Uav(p + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))),
            Pose::Ugv { x, y, theta } => Pose::Ugv { x: x + normal.sample(rng), y: y + normal.sample(rng), theta },
        }
    }

    fn dump_agents(&self) -> Vec<AgentDump> {
        self.agent_ids()
            .into_iter()
            .map(|id| {
                let (position, theta) = match self.true_pose(id) {
                    Pose::Uav(p) => (p, 0.0),
                    Pose::Ugv { x, y, theta } => (Vec3::new(x, y, 0.0), theta),
                };
                AgentDump { agent: id, position, theta, command: self.commands[&id].components() }
            })
            .collect()
    }

    fn fail(&mut self, agent: Option<AgentId>, reason: String) {
        warn!("run aborted at t={}: {reason}", self.time());
        self.abort = Some(AbortReport {
            t: self.time(),
            agent,
            reason,
            nominal: vec![],
            filtered: vec![],
            rows: vec![],
            agents: self.dump_agents(),
        });
    }

    fn deliver(&mut self, now: f64) {
        for msg in self.network.deliver_due(now) {
            if let NodeId::Agent(id) = msg.dst {
                if let Some(unit) = self.units.get_mut(&id) {
                    unit.receive(&msg);
                }
            }
        }
    }

    fn log_records(&mut self) {
        for r in self.watcher.take_records() {
            self.watcher_log.push_str(&serde_json::to_string(&r).expect("record serializes"));
            self.watcher_log.push('\n');
        }
    }

    fn watcher_tick(&mut self, now: f64) -> bool {
        for id in self.agent_ids() {
            let pose = self.localize(id);
            self.watcher.observe(id, pose, now);
        }
        let out = match self.watcher.tick(now) {
            Ok(out) => out,
            Err(e) => {
                self.log_records();
                self.fail(None, format!("watcher: {e}"));
                return false;
            }
        };
        self.log_records();
        for (dst, payload) in out {
            if let Err(e) = self.network.send(NodeId::Watcher, dst, payload, now) {
                self.fail(None, format!("network: {e}"));
                return false;
            }
        }
        true
    }

    fn logged_sample(&self, id: AgentId) -> AgentSample {
        let landed = self.units[&id].mode() == UavMode::Landed;
        let (position, theta) = match self.true_pose(id) {
            Pose::Uav(p) => (p, 0.0),
            Pose::Ugv { x, y, theta } => (Vec3::new(x, y, 0.0), theta),
        };
        AgentSample {
            position: Vec3::new(quantize(position.x), quantize(position.y), quantize(position.z)),
            theta: quantize(theta),
            landed,
        }
    }

    fn control_tick(&mut self, now: f64) {
        let ids = self.agent_ids();
        let mut outputs = Vec::with_capacity(ids.len());
        for &id in &ids {
            match self.units.get_mut(&id).expect("unit").control_tick(now) {
                Ok(out) => outputs.push((id, out)),
                Err(e) => {
                    self.fail(Some(id), format!("safety filter: {e}"));
                    return;
                }
            }
        }
        let samples: BTreeMap<AgentId, AgentSample> = ids.iter().map(|id| (*id, self.logged_sample(*id))).collect();
        let mut failed = None;
        for (id, out) in &outputs {
            self.commands.insert(*id, out.command);
            let s = &samples[id];
            self.trajectory.push(&TrajectoryRow {
                t: now,
                agent: *id,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                theta: s.theta,
                u: out.command.components(),
                status: out.telemetry.status,
                min_h: self.ctx.min_h(*id, &samples),
            });
            if out.telemetry.status == TickStatus::Failed && failed.is_none() {
                failed = Some((*id, out.telemetry.clone()));
            }
        }
        if let Some((id, tel)) = failed {
            self.fail(Some(id), format!("safety filter failed even with slack relaxation (violation {})", tel.max_violation));
            if let Some(report) = self.abort.as_mut() {
                report.nominal = tel.nominal;
                report.filtered = tel.filtered;
                report.rows = tel
                    .rows
                    .iter()
                    .map(|r| RowDump { kind: r.kind.to_string(), other: r.other_id, a: r.a.clone(), b: r.b, h: r.h_value })
                    .collect();
            }
        }
    }

    fn integrate(&mut self) {
        let dt = self.config.dt;
        for i in 0..self.uavs.len() {
            let id = AgentId::uav(i as u32);
            if self.units[&id].mode() == UavMode::Landed {
                let g = self.ugvs[i];
                self.uavs[i] = self.config.safety.platform(Vec2::new(g.x, g.y));
                continue;
            }
            if let Command::Uav { velocity } = self.commands[&id] {
                self.uavs[i] += velocity * dt;
            }
        }
        for i in 0..self.ugvs.len() {
            if let Command::Ugv { v, omega, .. } = self.commands[&AgentId::ugv(i as u32)] {
                self.ugvs[i] = step_ugv(&self.ugvs[i], v, omega, dt);
            }
        }
        // A UAV pinned during this step follows its UGV's new position.
        for i in 0..self.uavs.len() {
            if self.units[&AgentId::uav(i as u32)].mode() == UavMode::Landed {
                let g = self.ugvs[i];
                self.uavs[i] = self.config.safety.platform(Vec2::new(g.x, g.y));
            }
        }
    }

    /// Advance one `dt`.
    pub fn step(&mut self) {
        if self.is_finished() {
            return;
        }
        let now = self.time();
        for (k, e) in self.config.landing.iter().enumerate() {
            if !self.landing_sent[k] && e.time <= now + 1e-9 {
                self.landing_sent[k] = true;
                if let Ok(outcome) = self.watcher.handle_landing_signal(e.pair, now) {
                    info!("landing signal for pair {} at t={now}: {outcome:?}", e.pair);
                }
            }
        }
        self.deliver(now);
        if self.step.is_multiple_of(self.config.watcher_every()) {
            if !self.watcher_tick(now) {
                return;
            }
            self.deliver(now);
        } else {
            self.log_records();
        }
        if self.step.is_multiple_of(self.config.control_every()) {
            self.control_tick(now);
            if self.abort.is_some() {
                return;
            }
        }
        self.integrate();
        self.step += 1;
    }

    pub fn finish(mut self) -> RunOutput {
        self.log_records();
        let links: Vec<LinkEntry> =
            self.network.link_stats().iter().map(|(&(src, dst), &stats)| LinkEntry { src, dst, stats }).collect();
        let trace = self.network.trace().map(|records| {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r).expect("trace serializes"));
                out.push('\n');
            }
            out
        });
        let trajectory = self.trajectory.finish();
        let summary = summarize(&self.config, &trajectory, Some(&self.watcher_log), &links)
            .expect("runner output parses");
        RunOutput { trajectory, watcher_log: self.watcher_log, trace, links, summary, abort: self.abort }
    }
}

/// Run a validated scenario to completion or abort.
pub fn run(config: &ScenarioConfig, options: RunOptions) -> RunOutput {
    let mut sim = Simulation::new(config, options);
    while !sim.is_finished() {
        sim.step();
    }
    sim.finish()
}

/// Write every artifact of a run into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, config: &ScenarioConfig, out: &RunOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), config.to_toml())?;
    std::fs::write(dir.join("trajectory.csv"), &out.trajectory)?;
    std::fs::write(dir.join("watcher.jsonl"), &out.watcher_log)?;
    std::fs::write(dir.join("links.json"), serde_json::to_string_pretty(&out.links).expect("links serialize"))?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&out.summary).expect("summary serializes"))?;
    match &out.trace {
        Some(trace) => std::fs::write(dir.join("trace.jsonl"), trace)?,
        None => {
            let _ = std::fs::remove_file(dir.join("trace.jsonl"));
        }
    }
    match &out.abort {
        Some(report) => {
            std::fs::write(dir.join("abort.json"), serde_json::to_string_pretty(report).expect("report serializes"))?
        }
        None => {
            let _ = std::fs::remove_file(dir.join("abort.json"));
        }
    }
    Ok(())
}

/// Watcher matrix records, for tests and tools that inspect row counts.
pub fn matrix_records(watcher_log: &str) -> Vec<WatcherRecord> {
    super::log::parse_watcher_log(watcher_log)
        .unwrap_or_default()
        .into_iter()
        .filter(|r| matches!(r, WatcherRecord::Matrix { .. }))
        .collect()
}
