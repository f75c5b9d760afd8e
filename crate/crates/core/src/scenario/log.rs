//! Trajectory log: one CSV record per agent per control tick, fixed
//! nine-decimal formatting so identical runs produce identical bytes.

use std::collections::BTreeMap;

use crate::agent::TickStatus;
use crate::ids::{AgentId, AgentKind};
use crate::watcher::WatcherRecord;

pub const HEADER: [&str; 12] =
    ["time_s", "agent_id", "kind", "x", "y", "z", "theta", "u1", "u2", "u3", "qp_status", "min_h_this_tick"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

fn malformed(line: u64, message: impl Into<String>) -> LogError {
    LogError::Malformed { line, message: message.into() }
}

/// Fixed nine-decimal rendering; negative zero prints as zero.
pub fn fmt9(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.9}")
}

/// The value a logged number parses back to.
pub fn quantize(v: f64) -> f64 {
    fmt9(v).parse().expect("formatted float parses")
}

/// One agent at one control tick. UAV rows carry `theta = 0`; UGV rows carry
/// the body position with `z = 0`. `u` is the UAV velocity, or the UGV
/// offset-point velocity and turn rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent: AgentId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub u: [f64; 3],
    pub status: TickStatus,
    /// Smallest barrier value involving the agent; empty for a landed UAV.
    pub min_h: Option<f64>,
}

pub struct TrajectoryWriter {
    inner: csv::Writer<Vec<u8>>,
}

impl Default for TrajectoryWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl TrajectoryWriter {
    pub fn new() -> Self {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        inner.write_record(HEADER).expect("in-memory write");
        Self { inner }
    }

    pub fn push(&mut self, row: &TrajectoryRow) {
        let kind = match row.agent.kind {
            AgentKind::Uav => "uav",
            AgentKind::Ugv => "ugv",
        };
        let record = [
            fmt9(row.t),
            row.agent.to_string(),
            kind.to_string(),
            fmt9(row.x),
            fmt9(row.y),
            fmt9(row.z),
            fmt9(row.theta),
            fmt9(row.u[0]),
            fmt9(row.u[1]),
            fmt9(row.u[2]),
            row.status.as_str().to_string(),
            row.min_h.map(fmt9).unwrap_or_default(),
        ];
        self.inner.write_record(&record).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        let bytes = self.inner.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("ascii output")
    }
}

fn number(field: &str, line: u64, name: &str) -> Result<f64, LogError> {
    let v: f64 = field.parse().map_err(|_| malformed(line, format!("{name}: not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("{name}: non-finite value {field:?}")));
    }
    Ok(v)
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRow>, LogError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut saw_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !saw_header {
            if record.iter().ne(HEADER.iter().copied()) {
                return Err(malformed(line, "missing or wrong header row"));
            }
            saw_header = true;
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(malformed(line, format!("expected {} fields, found {}", HEADER.len(), record.len())));
        }
        let agent: AgentId = record[1].parse().map_err(|e| malformed(line, format!("agent_id: {e}")))?;
        let kind_ok = matches!((&record[2], agent.kind), ("uav", AgentKind::Uav) | ("ugv", AgentKind::Ugv));
        if !kind_ok {
            return Err(malformed(line, format!("kind {:?} does not match agent {agent}", &record[2])));
        }
        let status =
            TickStatus::parse(&record[10]).ok_or_else(|| malformed(line, format!("unknown qp_status {:?}", &record[10])))?;
        let min_h = match &record[11] {
            "" => None,
            s => Some(number(s, line, "min_h_this_tick")?),
        };
        rows.push(TrajectoryRow {
            t: number(&record[0], line, "time_s")?,
            agent,
            x: number(&record[3], line, "x")?,
            y: number(&record[4], line, "y")?,
            z: number(&record[5], line, "z")?,
            theta: number(&record[6], line, "theta")?,
            u: [number(&record[7], line, "u1")?, number(&record[8], line, "u2")?, number(&record[9], line, "u3")?],
            status,
            min_h,
        });
    }
    if !saw_header {
        return Err(malformed(1, "empty log: header row required"));
    }
    Ok(rows)
}

/// Rows grouped by tick time, in log order.
pub fn group_by_tick(rows: &[TrajectoryRow]) -> Vec<(f64, BTreeMap<AgentId, &TrajectoryRow>)> {
    let mut out: Vec<(f64, BTreeMap<AgentId, &TrajectoryRow>)> = Vec::new();
    for row in rows {
        match out.last_mut() {
            Some((t, group)) if *t == row.t => {
                group.insert(row.agent, row);
            }
            _ => out.push((row.t, BTreeMap::from([(row.agent, row)]))),
        }
    }
    out
}

pub fn parse_watcher_log(text: &str) -> Result<Vec<WatcherRecord>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| malformed(i as u64 + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, agent: AgentId) -> TrajectoryRow {
        TrajectoryRow {
            t,
            agent,
            x: 1.0 / 3.0,
            y: -0.0,
            z: 1.5,
            theta: 0.0,
            u: [0.1, -0.2, 0.3],
            status: TickStatus::Optimal,
            min_h: Some(0.25),
        }
    }

    #[test]
    fn formatting_is_fixed() {
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(-0.0), "0.000000000");
        assert_eq!(fmt9(-1e-12), "-0.000000000");
        assert_eq!(quantize(2.0 / 3.0), 0.666666667);
    }

    #[test]
    fn round_trip() {
        let mut w = TrajectoryWriter::new();
        w.push(&row(0.0, AgentId::uav(0)));
        w.push(&TrajectoryRow { min_h: None, status: TickStatus::Landed, ..row(0.0, AgentId::ugv(1)) });
        let text = w.finish();
        assert!(text.starts_with("time_s,agent_id,kind,x,y,z,theta,u1,u2,u3,qp_status,min_h_this_tick\n"));
        assert!(text.contains("0.000000000,uav0,uav,0.333333333,0.000000000,1.500000000,"));
        let rows = parse_trajectory(&text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].x, 0.333333333);
        assert_eq!(rows[1].min_h, None);
        assert_eq!(rows[1].status, TickStatus::Landed);
    }

    #[test]
    fn malformed_lines_are_located() {
        let mut w = TrajectoryWriter::new();
        w.push(&row(0.0, AgentId::uav(0)));
        w.push(&row(0.02, AgentId::uav(0)));
        let text = w.finish().replace("0.020000000,uav0,uav,0.333333333", "0.020000000,uav0,uav,abc");
        assert!(matches!(parse_trajectory(&text), Err(LogError::Malformed { line: 3, .. })));
        let short = "time_s,agent_id,kind,x,y,z,theta,u1,u2,u3,qp_status,min_h_this_tick\n0.0,uav0\n";
        assert!(matches!(parse_trajectory(short), Err(LogError::Malformed { line: 2, .. })));
        assert!(matches!(parse_trajectory(""), Err(LogError::Malformed { line: 1, .. })));
        assert!(matches!(parse_trajectory("a,b\n"), Err(LogError::Malformed { line: 1, .. })));
    }
}
