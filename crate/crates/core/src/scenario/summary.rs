//! Run metrics recomputed from logged states, independent of the values the
//! controllers reported.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{nid_offset, TickStatus, UgvState};
use crate::cbf::{eval_aa, eval_ago, eval_box, eval_gg, eval_landing, BoxPoint, RowKind, SafetyParams};
use crate::geometry::{Vec2, Vec3};
use crate::ids::{AgentId, AgentKind, NodeId};
use crate::netsim::LinkStats;
use crate::watcher::{PairPhase, WatcherRecord};

use super::config::{parse_config, ConfigError, ScenarioConfig};
use super::log::{group_by_tick, parse_trajectory, parse_watcher_log, LogError, TrajectoryRow};

/// Largest allowed gap between a logged `min_h_this_tick` and its
/// recomputation from the logged states.
pub const CROSS_CHECK_TOL: f64 = 1e-9;

/// Logged state of one agent at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSample {
    pub position: Vec3,
    pub theta: f64,
    pub landed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValue {
    pub kind: RowKind,
    pub other: Option<AgentId>,
    pub h: f64,
}

/// Geometry needed to evaluate barriers from logged states.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierContext {
    pub params: SafetyParams,
    /// NID offset of each UGV.
    pub offsets: BTreeMap<AgentId, f64>,
}

impl BarrierContext {
    pub fn from_config(c: &ScenarioConfig) -> Self {
        let offsets = c.pairs.iter().enumerate().map(|(i, p)| (AgentId::ugv(i as u32), p.ugv.offset)).collect();
        Self { params: c.safety, offsets }
    }

    fn offset_point(&self, id: AgentId, s: &AgentSample) -> Vec2 {
        let offset = self.offsets.get(&id).copied().unwrap_or(0.0);
        nid_offset(&UgvState { x: s.position.x, y: s.position.y, theta: s.theta, offset, wheel_base: 1.0 })
    }

    /// Every barrier involving `agent` at one tick, ungated by proximity:
    /// box faces, AGC, AA with other airborne UAVs and AGO with the other
    /// UGVs for a UAV; box faces and GG for a UGV. A landed UAV has none.
    pub fn barrier_values(&self, agent: AgentId, tick: &BTreeMap<AgentId, AgentSample>) -> Vec<BarrierValue> {
        let Some(me) = tick.get(&agent) else { return Vec::new() };
        let p = &self.params;
        let mut out = Vec::new();
        match agent.kind {
            AgentKind::Uav => {
                if me.landed {
                    return out;
                }
                let q = me.position;
                for bv in eval_box(BoxPoint::Uav(q), &p.bounds) {
                    out.push(BarrierValue { kind: RowKind::Box, other: None, h: bv.h });
                }
                for (&other, s) in tick {
                    match other.kind {
                        AgentKind::Uav if other != agent && !s.landed => {
                            let h = eval_aa(q, s.position, p.s_a).unwrap_or(f64::NAN);
                            out.push(BarrierValue { kind: RowKind::Aa, other: Some(other), h });
                        }
                        AgentKind::Ugv => {
                            let platform = p.platform(s.position.xy());
                            let (kind, h) = if other.index == agent.index {
                                let h = eval_landing(q, platform, p.alpha, p.beta, p.gamma).map_or(f64::NAN, |e| e.h);
                                (RowKind::Agc, h)
                            } else {
                                (RowKind::Ago, eval_ago(q, platform, p.s_ag).unwrap_or(f64::NAN))
                            };
                            out.push(BarrierValue { kind, other: Some(other), h });
                        }
                        _ => {}
                    }
                }
            }
            AgentKind::Ugv => {
                let rho = self.offset_point(agent, me);
                for bv in eval_box(BoxPoint::Ugv(rho), &p.bounds) {
                    out.push(BarrierValue { kind: RowKind::Box, other: None, h: bv.h });
                }
                for (&other, s) in tick {
                    if other.kind == AgentKind::Ugv && other != agent {
                        let h = eval_gg(rho, self.offset_point(other, s), p.s_g).unwrap_or(f64::NAN);
                        out.push(BarrierValue { kind: RowKind::Gg, other: Some(other), h });
                    }
                }
            }
        }
        out
    }

    pub fn min_h(&self, agent: AgentId, tick: &BTreeMap<AgentId, AgentSample>) -> Option<f64> {
        self.barrier_values(agent, tick).iter().map(|b| b.h).reduce(f64::min)
    }
}

impl From<&TrajectoryRow> for AgentSample {
    fn from(r: &TrajectoryRow) -> Self {
        AgentSample { position: Vec3::new(r.x, r.y, r.z), theta: r.theta, landed: r.status == TickStatus::Landed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(flatten)]
    pub stats: LinkStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkSummary {
    /// Agents that exchanged at least one message with the Watcher.
    pub agent_links: usize,
    pub directed_links: usize,
    /// Links with no Watcher endpoint; always zero on a star.
    pub agent_to_agent: usize,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

impl LinkSummary {
    pub fn from_entries(entries: &[LinkEntry]) -> Self {
        let mut agents = std::collections::BTreeSet::new();
        let mut s = LinkSummary { directed_links: entries.len(), ..Default::default() };
        for e in entries {
            match (e.src, e.dst) {
                (NodeId::Watcher, NodeId::Agent(a)) | (NodeId::Agent(a), NodeId::Watcher) => {
                    agents.insert(a);
                }
                _ => s.agent_to_agent += 1,
            }
            s.sent += e.stats.sent;
            s.delivered += e.stats.delivered;
            s.dropped += e.stats.dropped;
            s.bytes += e.stats.bytes;
        }
        s.agent_links = agents.len();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingSummary {
    pub pair: u32,
    pub signal_time: f64,
    pub touchdown_time: Option<f64>,
    /// Smallest landing-funnel value logged between the signal and touchdown.
    pub min_h_descent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub t: f64,
    pub agent: AgentId,
    pub logged: Option<f64>,
    pub recomputed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub ticks: usize,
    pub records: usize,
    /// Minimum barrier value per family ("AA", "GG", "AGO", "AGC", "BOX").
    pub min_h: BTreeMap<String, f64>,
    /// Minimum center distances: "uav_uav", "ugv_ugv" (offset points),
    /// "uav_ugv" (UAV to another pair's platform point).
    pub min_distance: BTreeMap<String, f64>,
    pub qp_status: BTreeMap<String, u64>,
    pub landings: Vec<LandingSummary>,
    pub links: LinkSummary,
    /// Active-row count of Watcher matrices, "count -> occurrences".
    pub row_histogram: BTreeMap<usize, u64>,
    pub telemetry_mismatches: usize,
    pub first_mismatch: Option<Mismatch>,
}

impl MetricsSummary {
    pub fn min_h_of(&self, kind: RowKind) -> Option<f64> {
        self.min_h.get(kind.as_str()).copied()
    }

    pub fn status_count(&self, status: TickStatus) -> u64 {
        self.qp_status.get(status.as_str()).copied().unwrap_or(0)
    }
}

fn take_min(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(v);
    // NaN poisons the minimum so that degenerate states stay visible.
    if v < *e || v.is_nan() {
        *e = v;
    }
}

/// Aggregate a run from its logs.
pub fn summarize(
    config: &ScenarioConfig,
    trajectory: &str,
    watcher_log: Option<&str>,
    links: &[LinkEntry],
) -> Result<MetricsSummary, LogError> {
    let rows = parse_trajectory(trajectory)?;
    let records = match watcher_log {
        Some(text) => parse_watcher_log(text)?,
        None => Vec::new(),
    };
    let ctx = BarrierContext::from_config(config);
    let mut s = MetricsSummary {
        records: rows.len(),
        links: LinkSummary::from_entries(links),
        qp_status: ["optimal", "relaxed", "failed", "hold", "landed"].iter().map(|k| (k.to_string(), 0)).collect(),
        ..Default::default()
    };

    let mut touchdown: BTreeMap<u32, f64> = BTreeMap::new();
    for r in &records {
        match r {
            WatcherRecord::Matrix { rows, .. } => *s.row_histogram.entry(*rows).or_default() += 1,
            WatcherRecord::Phase { t, pair, phase: PairPhase::Landed } => {
                touchdown.entry(*pair).or_insert(*t);
            }
            _ => {}
        }
    }
    let mut signals: BTreeMap<u32, f64> = BTreeMap::new();
    for e in &config.landing {
        if (e.pair as usize) < config.n_pairs() {
            let slot = signals.entry(e.pair).or_insert(e.time);
            *slot = slot.min(e.time);
        }
    }
    let mut descent: BTreeMap<u32, f64> = BTreeMap::new();

    let ticks = group_by_tick(&rows);
    s.ticks = ticks.len();
    for (t, group) in &ticks {
        let samples: BTreeMap<AgentId, AgentSample> = group.iter().map(|(id, r)| (*id, AgentSample::from(*r))).collect();
        for (&id, row) in group {
            let values = ctx.barrier_values(id, &samples);
            for v in &values {
                take_min(&mut s.min_h, v.kind.as_str(), v.h);
                if v.kind == RowKind::Agc {
                    if let Some(&t0) = signals.get(&id.index) {
                        let done = touchdown.get(&id.index).is_some_and(|td| t > td);
                        if *t >= t0 && !done {
                            let e = descent.entry(id.index).or_insert(v.h);
                            *e = e.min(v.h);
                        }
                    }
                }
            }
            let recomputed = values.iter().map(|b| b.h).reduce(f64::min);
            let agree = match (row.min_h, recomputed) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= CROSS_CHECK_TOL,
                _ => false,
            };
            if !agree {
                s.telemetry_mismatches += 1;
                s.first_mismatch.get_or_insert(Mismatch { t: *t, agent: id, logged: row.min_h, recomputed });
            }
            *s.qp_status.entry(row.status.as_str().to_string()).or_default() += 1;
        }
        for (&a, sa) in &samples {
            for (&b, sb) in samples.range(a..).skip(1) {
                match (a.kind, b.kind) {
                    (AgentKind::Uav, AgentKind::Uav) if !sa.landed && !sb.landed => {
                        take_min(&mut s.min_distance, "uav_uav", (sa.position - sb.position).norm());
                    }
                    (AgentKind::Ugv, AgentKind::Ugv) => {
                        let d = (ctx.offset_point(a, sa) - ctx.offset_point(b, sb)).norm();
                        take_min(&mut s.min_distance, "ugv_ugv", d);
                    }
                    (AgentKind::Uav, AgentKind::Ugv) if a.index != b.index && !sa.landed => {
                        let d = (sa.position - ctx.params.platform(sb.position.xy())).norm();
                        take_min(&mut s.min_distance, "uav_ugv", d);
                    }
                    _ => {}
                }
            }
        }
    }

    s.landings = signals
        .iter()
        .map(|(&pair, &signal_time)| LandingSummary {
            pair,
            signal_time,
            touchdown_time: touchdown.get(&pair).copied(),
            min_h_descent: descent.get(&pair).copied(),
        })
        .collect();
    Ok(s)
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config.toml: {0}")]
    Config(#[from] ConfigError),
    #[error("{file}: {source}")]
    Log { file: &'static str, source: LogError },
    #[error("links.json: {0}")]
    Links(serde_json::Error),
}

fn read(dir: &Path, name: &str) -> Result<String, SummarizeError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|source| SummarizeError::Io { path: path.display().to_string(), source })
}

/// Summarize an output directory written by the runner.
pub fn summarize_dir(dir: &Path) -> Result<MetricsSummary, SummarizeError> {
    let config = parse_config(&read(dir, "config.toml")?)?;
    let trajectory = read(dir, "trajectory.csv")?;
    let watcher = read(dir, "watcher.jsonl")?;
    let links: Vec<LinkEntry> = serde_json::from_str(&read(dir, "links.json")?).map_err(SummarizeError::Links)?;
    summarize(&config, &trajectory, Some(&watcher), &links).map_err(|source| {
        let file = match &source {
            LogError::Malformed { .. } if parse_trajectory(&trajectory).is_err() => "trajectory.csv",
            _ => "watcher.jsonl",
        };
        SummarizeError::Log { file, source }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BarrierContext {
        BarrierContext {
            params: SafetyParams::default(),
            offsets: BTreeMap::from([(AgentId::ugv(0), 0.1), (AgentId::ugv(1), 0.1)]),
        }
    }

    fn sample(x: f64, y: f64, z: f64) -> AgentSample {
        AgentSample { position: Vec3::new(x, y, z), theta: 0.0, landed: false }
    }

    #[test]
    fn barrier_families_per_kind() {
        let tick = BTreeMap::from([
            (AgentId::uav(0), sample(0.0, 0.0, 1.0)),
            (AgentId::uav(1), sample(1.0, 0.0, 1.0)),
            (AgentId::ugv(0), sample(3.0, 0.0, 0.0)),
            (AgentId::ugv(1), sample(-3.0, 0.0, 0.0)),
        ]);
        let c = ctx();
        let kinds: Vec<RowKind> = c.barrier_values(AgentId::uav(0), &tick).iter().map(|b| b.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Box).count(), 5);
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Aa).count(), 1);
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Agc).count(), 1);
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Ago).count(), 1);
        let ugv: Vec<RowKind> = c.barrier_values(AgentId::ugv(0), &tick).iter().map(|b| b.kind).collect();
        assert_eq!(ugv.len(), 5);
        // AA value: 1 - 0.25
        let aa = c.barrier_values(AgentId::uav(0), &tick).into_iter().find(|b| b.kind == RowKind::Aa).unwrap();
        assert!((aa.h - 0.75).abs() < 1e-15);
        // GG on offset points (3.1, 0) and (-2.9, 0): 36 - 1
        let gg = c.barrier_values(AgentId::ugv(0), &tick).into_iter().find(|b| b.kind == RowKind::Gg).unwrap();
        assert!((gg.h - 35.0).abs() < 1e-12);
    }

    #[test]
    fn landed_uav_has_no_barriers_and_is_ignored() {
        let mut landed = sample(1.0, 0.0, 0.0);
        landed.landed = true;
        let tick = BTreeMap::from([(AgentId::uav(0), sample(0.0, 0.0, 1.0)), (AgentId::uav(1), landed)]);
        let c = ctx();
        assert!(c.barrier_values(AgentId::uav(1), &tick).is_empty());
        assert!(c.barrier_values(AgentId::uav(0), &tick).iter().all(|b| b.kind != RowKind::Aa));
    }
}
